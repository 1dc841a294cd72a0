#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fairfed {

inline constexpr double kSignificanceLevel = 0.05;
inline constexpr std::size_t kWilcoxonMinPairs = 5;
inline constexpr std::size_t kWilcoxonExactLimit = 20;

struct WilcoxonResult {
    // Sum of ranks of positive differences a - b.
    double w_plus = 0.0;
    // Pairs left after dropping zero differences.
    std::size_t n = 0;
    double p_value = 1.0;
    bool exact = true;

    bool significant(double level = kSignificanceLevel) const { return p_value < level; }
};

/// Average ranks (1-based) of |d|, ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> abs_diffs);

/// One-sided signed-rank test of H1: a tends to exceed b.
/// Zero differences are dropped. The null distribution of W+ is exact (with the
/// observed tied ranks) for up to 20 pairs and a tie-corrected normal approximation beyond.
/// Throws when every difference is zero or fewer than 5 pairs remain.
WilcoxonResult wilcoxon_signed_rank_greater(std::span<const double> a, std::span<const double> b);

}  // namespace fairfed
