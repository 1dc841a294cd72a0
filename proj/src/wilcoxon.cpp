#include "fairfed/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fairfed {

std::vector<double> average_ranks(std::span<const double> abs_diffs) {
    const std::size_t n = abs_diffs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return abs_diffs[i] < abs_diffs[j]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

WilcoxonResult wilcoxon_signed_rank_greater(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: samples must have equal length");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty()) throw std::invalid_argument("wilcoxon: all differences are zero, test is inapplicable");
    if (diffs.size() < kWilcoxonMinPairs) {
        throw std::invalid_argument("wilcoxon: need at least " + std::to_string(kWilcoxonMinPairs) +
                                    " non-zero differences, got " + std::to_string(diffs.size()));
    }

    std::vector<double> abs_diffs(diffs.size());
    std::transform(diffs.begin(), diffs.end(), abs_diffs.begin(), [](double d) { return std::abs(d); });
    const auto ranks = average_ranks(abs_diffs);

    WilcoxonResult result;
    result.n = diffs.size();
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        if (diffs[i] > 0) result.w_plus += ranks[i];
    }

    if (result.n <= kWilcoxonExactLimit) {
        // Average ranks are multiples of 1/2, so doubled ranks are exact integers.
        std::vector<std::size_t> doubled(ranks.size());
        std::transform(ranks.begin(), ranks.end(), doubled.begin(),
                       [](double r) { return static_cast<std::size_t>(std::lround(2.0 * r)); });
        const std::size_t max_sum = std::accumulate(doubled.begin(), doubled.end(), std::size_t{0});
        // counts[s] = number of sign patterns whose doubled positive-rank sum is s.
        std::vector<double> counts(max_sum + 1, 0.0);
        counts[0] = 1.0;
        std::size_t reach = 0;
        for (auto r : doubled) {
            for (std::size_t s = reach + 1; s-- > 0;) {
                if (counts[s] != 0.0) counts[s + r] += counts[s];
            }
            reach += r;
        }
        const auto observed = static_cast<std::size_t>(std::lround(2.0 * result.w_plus));
        const double tail = std::accumulate(counts.begin() + static_cast<std::ptrdiff_t>(observed), counts.end(), 0.0);
        result.p_value = tail / std::ldexp(1.0, static_cast<int>(result.n));
        result.exact = true;
        return result;
    }

    const double n = static_cast<double>(result.n);
    const double mean = n * (n + 1.0) / 4.0;
    double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        variance -= (t * t * t - t) / 48.0;
        i = j;
    }
    // Continuity-corrected upper tail.
    const double z = (result.w_plus - mean - 0.5) / std::sqrt(variance);
    result.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
    result.exact = false;
    return result;
}

}  // namespace fairfed
