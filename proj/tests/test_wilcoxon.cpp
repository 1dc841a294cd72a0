#include <random>

#include "doctest.h"
#include "fairfed/wilcoxon.hpp"
#include "support.hpp"

using namespace fairfed;

TEST_CASE("average ranks with ties") {
    const std::vector<double> d{0.5, 0.1, 0.5, 0.3};
    CHECK(average_ranks(d) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
}

TEST_CASE("exact p-value on a small paired sample") {
    const std::vector<double> a{0.82, 0.91, 0.77, 0.95, 0.88, 0.79, 0.93, 0.85};
    const std::vector<double> b{0.60, 0.71, 0.80, 0.55, 0.62, 0.79, 0.58, 0.66};
    const auto r = wilcoxon_signed_rank_greater(a, b);
    CHECK(r.exact);
    CHECK(r.n == 7);
    CHECK(r.w_plus == 27.0);
    CHECK(r.p_value == doctest::Approx(0.015625).epsilon(1e-12));
    CHECK(r.significant());
    CHECK_FALSE(wilcoxon_signed_rank_greater(b, a).significant());
}

TEST_CASE("exact p-values match sign enumeration") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> level(0, 6);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 5 + rng() % 8;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            // coarse grid so ties and zeros show up
            a[i] = level(rng) * 0.25;
            b[i] = level(rng) * 0.25;
        }
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < n; ++i) nonzero += a[i] != b[i];
        if (nonzero < kWilcoxonMinPairs) {
            CHECK_THROWS(wilcoxon_signed_rank_greater(a, b));
            continue;
        }
        const auto r = wilcoxon_signed_rank_greater(a, b);
        CHECK(r.p_value == doctest::Approx(testing::enumerate_wilcoxon_p(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("normal approximation above the exact limit") {
    std::vector<double> a, b;
    for (int i = 0; i < 25; ++i) {
        a.push_back(0.1 * ((i * 7) % 13) + 0.05 * i);
        b.push_back(0.1 * ((i * 5) % 11) + 0.02 * i);
    }
    const auto r = wilcoxon_signed_rank_greater(a, b);
    CHECK_FALSE(r.exact);
    CHECK(r.w_plus == 245.0);
    // scipy.stats.wilcoxon(alternative="greater", method="approx", correction=True)
    CHECK(r.p_value == doctest::Approx(0.0034669738030406647).epsilon(1e-9));
}

TEST_CASE("degenerate inputs") {
    const std::vector<double> same{0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS(wilcoxon_signed_rank_greater(same, same));
    const std::vector<double> a{1, 2, 3}, b{0, 0, 0};
    CHECK_THROWS(wilcoxon_signed_rank_greater(a, b));
    const std::vector<double> c{1, 2, 3, 4, 5, 6};
    CHECK_THROWS(wilcoxon_signed_rank_greater(c, a));
}
