#include <cmath>
#include <random>

#include "doctest.h"
#include "fairfed/nn_core.hpp"
#include "support.hpp"

using namespace fairfed;

TEST_CASE("init_params is glorot uniform with zero biases and seed determinism") {
    const ModelShape shape{7, 10};
    const auto p = init_params(shape, 42);
    CHECK(p.size() == shape.parameter_count());
    CHECK(p.size() == 7 * 10 + 10 + 10 + 1);
    const double b1 = std::sqrt(6.0 / (7 + 10));
    const double b2 = std::sqrt(6.0 / (10 + 1));
    for (double w : p.w1()) CHECK(std::fabs(w) <= b1);
    for (double w : p.w2()) CHECK(std::fabs(w) <= b2);
    for (double b : p.b1()) CHECK(b == 0.0);
    CHECK(p.b2() == 0.0);
    CHECK(init_params(shape, 42) == p);
    CHECK_FALSE(init_params(shape, 43) == p);
}

TEST_CASE("zero parameters predict exactly one half") {
    ModelParams p(ModelShape{3, 4});
    Matrix x(2, 3);
    x.at(0, 0) = 5.0;
    x.at(1, 2) = -2.0;
    for (double v : predict_proba(p, x)) CHECK(v == 0.5);
}

TEST_CASE("backprop matches central differences") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> w(0.1, 2.0);
    for (int trial = 0; trial < 5; ++trial) {
        const auto ds = testing::random_dataset(12, 4, rng);
        const auto params = init_params(ModelShape{4, 5}, rng());
        std::vector<double> weights(12);
        for (auto& v : weights) v = w(rng);
        const auto analytic = loss_and_grad(params, ds.x, ds.y, weights).grad;
        const auto numeric = testing::numeric_gradient(params, ds.x, ds.y, weights);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            CHECK(analytic[i] == doctest::Approx(numeric[i]).epsilon(1e-5));
        }
    }
}

TEST_CASE("loss is a weighted mean") {
    std::mt19937_64 rng(2);
    const auto ds = testing::random_dataset(8, 3, rng);
    const auto params = init_params(ModelShape{3, 4}, 9);
    std::vector<double> ones(8, 1.0), threes(8, 3.0);
    const auto a = loss_and_grad(params, ds.x, ds.y, ones);
    const auto b = loss_and_grad(params, ds.x, ds.y, threes);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));

    // zero weight removes a row entirely
    std::vector<double> drop(8, 1.0);
    drop[0] = 0.0;
    std::vector<std::size_t> rest{1, 2, 3, 4, 5, 6, 7};
    const auto c = loss_and_grad(params, ds.x, ds.y, drop);
    const auto d = loss_and_grad(params, ds.x, ds.y, ones, rest);
    CHECK(c.loss == doctest::Approx(d.loss).epsilon(1e-14));
    for (std::size_t i = 0; i < params.size(); ++i) CHECK(c.grad[i] == doctest::Approx(d.grad[i]).epsilon(1e-12));

    std::vector<double> zeros(8, 0.0);
    CHECK_THROWS(loss_and_grad(params, ds.x, ds.y, zeros));
}

TEST_CASE("loss of zero params is log 2") {
    ModelParams p(ModelShape{2, 3});
    Matrix x(4, 2);
    std::vector<int> y{0, 1, 1, 0};
    std::vector<double> w(4, 1.0);
    CHECK(loss_and_grad(p, x, y, w).loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("apply_step is plain gradient descent") {
    const auto p = init_params(ModelShape{3, 2}, 5);
    auto g = init_params(ModelShape{3, 2}, 6);
    const auto q = apply_step(p, g, 0.1);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(q[i] == doctest::Approx(p[i] - 0.1 * g[i]));
}

TEST_CASE("shape and dimension errors") {
    CHECK_THROWS(ModelShape{0, 10}.validate());
    const auto p = init_params(ModelShape{3, 2}, 1);
    Matrix bad(2, 4);
    CHECK_THROWS(predict_proba(p, bad));
    const auto other = init_params(ModelShape{4, 2}, 1);
    auto copy = p;
    CHECK_THROWS(copy += other);
    LocalTrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("parameter arithmetic") {
    const auto a = init_params(ModelShape{2, 3}, 1);
    const auto b = init_params(ModelShape{2, 3}, 2);
    const auto c = a + b - b;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(c[i] == doctest::Approx(a[i]));
    CHECK((2.0 * a)[3] == doctest::Approx(2.0 * a[3]));
    CHECK(a.all_finite());
    auto d = a;
    d[0] = std::nan("");
    CHECK_FALSE(d.all_finite());
}
