#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "fairfed/data_pipeline.hpp"
#include "fairfed/nn_core.hpp"

namespace fairfed {

enum class FairnessMetric { kSP, kEO, kEQO };

std::string to_string(FairnessMetric m);
FairnessMetric parse_metric(const std::string& name);

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    std::size_t positives() const { return tp + fn; }
    std::size_t negatives() const { return fp + tn; }
    Confusion& operator+=(const Confusion& o);
    bool operator==(const Confusion&) const = default;
};

/// Confusion counts for each value of the sensitive attribute (index = s).
struct GroupConfusion {
    std::array<Confusion, 2> group{};

    Confusion overall() const;
    GroupConfusion& operator+=(const GroupConfusion& o);
    bool operator==(const GroupConfusion&) const = default;
};

GroupConfusion confusion_by_group(std::span<const int> y, std::span<const int> y_hat, std::span<const int> s);

/// min(a,b)/max(a,b), with 0/0 -> 1 and x/0 -> 0. Folds the "report 1/F when F > 1"
/// rule into one symmetric function whose ideal value is 1.
double bounded_ratio(double a, double b);

// Group-fairness ratios. std::nullopt when a required group or class is empty.
std::optional<double> statistical_parity(const GroupConfusion& conf);
std::optional<double> equal_opportunity(const GroupConfusion& conf);
std::optional<double> equalized_odds(const GroupConfusion& conf);
std::optional<double> fairness_value(const GroupConfusion& conf, FairnessMetric metric);

struct Performance {
    double accuracy = 0.0;
    double f1 = 0.0;
};

Performance performance_metrics(const GroupConfusion& conf);

struct FairnessReport {
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> sp;
    std::optional<double> eo;
    std::optional<double> eqo;

    std::optional<double> get(FairnessMetric m) const;
    bool operator==(const FairnessReport&) const = default;
};

inline constexpr double kDecisionThreshold = 0.5;

/// Thresholded predictions: p >= 0.5 is the positive class.
std::vector<int> predict_labels(const ModelParams& params, const Matrix& features);

FairnessReport make_report(const GroupConfusion& conf);
FairnessReport evaluate_model(const ModelParams& params, const TabularDataset& ds);

/// Validation fairness of a single metric; skips the accuracy/F1 bookkeeping.
std::optional<double> evaluate_fairness(const ModelParams& params, const TabularDataset& ds, FairnessMetric metric);

}  // namespace fairfed
