#include "fairfed/fairness_metrics.hpp"

#include <cctype>
#include <algorithm>
#include <stdexcept>

namespace fairfed {

std::string to_string(FairnessMetric m) {
    switch (m) {
        case FairnessMetric::kSP:
            return "SP";
        case FairnessMetric::kEO:
            return "EO";
        case FairnessMetric::kEQO:
            return "EQO";
    }
    return "?";
}

FairnessMetric parse_metric(const std::string& name) {
    std::string upper = name;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "SP") return FairnessMetric::kSP;
    if (upper == "EO") return FairnessMetric::kEO;
    if (upper == "EQO") return FairnessMetric::kEQO;
    throw std::invalid_argument("unknown fairness metric '" + name + "' (expected SP, EO or EQO)");
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

Confusion GroupConfusion::overall() const {
    Confusion c = group[0];
    c += group[1];
    return c;
}

GroupConfusion& GroupConfusion::operator+=(const GroupConfusion& o) {
    group[0] += o.group[0];
    group[1] += o.group[1];
    return *this;
}

GroupConfusion confusion_by_group(std::span<const int> y, std::span<const int> y_hat, std::span<const int> s) {
    if (y.size() != y_hat.size() || y.size() != s.size()) {
        throw std::invalid_argument("confusion_by_group: length mismatch");
    }
    GroupConfusion conf;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if ((y[i] != 0 && y[i] != 1) || (y_hat[i] != 0 && y_hat[i] != 1) || (s[i] != 0 && s[i] != 1)) {
            throw std::invalid_argument("confusion_by_group: entries must be binary");
        }
        auto& c = conf.group[static_cast<std::size_t>(s[i])];
        if (y[i] == 1) {
            (y_hat[i] == 1 ? c.tp : c.fn) += 1;
        } else {
            (y_hat[i] == 1 ? c.fp : c.tn) += 1;
        }
    }
    return conf;
}

double bounded_ratio(double a, double b) {
    if (a == 0.0 && b == 0.0) return 1.0;
    if (a == 0.0 || b == 0.0) return 0.0;
    return std::min(a, b) / std::max(a, b);
}

namespace {

double rate(std::size_t num, std::size_t den) { return static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

std::optional<double> statistical_parity(const GroupConfusion& conf) {
    const auto& g0 = conf.group[0];
    const auto& g1 = conf.group[1];
    if (g0.total() == 0 || g1.total() == 0) return std::nullopt;
    return bounded_ratio(rate(g0.tp + g0.fp, g0.total()), rate(g1.tp + g1.fp, g1.total()));
}

std::optional<double> equal_opportunity(const GroupConfusion& conf) {
    const auto& g0 = conf.group[0];
    const auto& g1 = conf.group[1];
    if (g0.positives() == 0 || g1.positives() == 0) return std::nullopt;
    return bounded_ratio(rate(g0.tp, g0.positives()), rate(g1.tp, g1.positives()));
}

std::optional<double> equalized_odds(const GroupConfusion& conf) {
    const auto& g0 = conf.group[0];
    const auto& g1 = conf.group[1];
    if (g0.positives() == 0 || g1.positives() == 0 || g0.negatives() == 0 || g1.negatives() == 0) {
        return std::nullopt;
    }
    const double tpr = bounded_ratio(rate(g0.tp, g0.positives()), rate(g1.tp, g1.positives()));
    const double fpr = bounded_ratio(rate(g0.fp, g0.negatives()), rate(g1.fp, g1.negatives()));
    return (tpr + fpr) / 2.0;
}

std::optional<double> fairness_value(const GroupConfusion& conf, FairnessMetric metric) {
    switch (metric) {
        case FairnessMetric::kSP:
            return statistical_parity(conf);
        case FairnessMetric::kEO:
            return equal_opportunity(conf);
        case FairnessMetric::kEQO:
            return equalized_odds(conf);
    }
    return std::nullopt;
}

Performance performance_metrics(const GroupConfusion& conf) {
    const Confusion c = conf.overall();
    Performance perf;
    if (c.total() > 0) perf.accuracy = rate(c.tp + c.tn, c.total());
    // F1 = 2TP / (2TP + FP + FN); zero when precision + recall = 0.
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    perf.f1 = c.tp == 0 ? 0.0 : rate(2 * c.tp, denom);
    return perf;
}

std::optional<double> FairnessReport::get(FairnessMetric m) const {
    switch (m) {
        case FairnessMetric::kSP:
            return sp;
        case FairnessMetric::kEO:
            return eo;
        case FairnessMetric::kEQO:
            return eqo;
    }
    return std::nullopt;
}

std::vector<int> predict_labels(const ModelParams& params, const Matrix& features) {
    const auto proba = predict_proba(params, features);
    std::vector<int> labels(proba.size());
    std::transform(proba.begin(), proba.end(), labels.begin(),
                   [](double p) { return p >= kDecisionThreshold ? 1 : 0; });
    return labels;
}

FairnessReport make_report(const GroupConfusion& conf) {
    const auto perf = performance_metrics(conf);
    return FairnessReport{perf.accuracy, perf.f1, statistical_parity(conf), equal_opportunity(conf),
                          equalized_odds(conf)};
}

FairnessReport evaluate_model(const ModelParams& params, const TabularDataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("evaluate_model: empty dataset");
    const auto y_hat = predict_labels(params, ds.x);
    return make_report(confusion_by_group(ds.y, y_hat, ds.s));
}

std::optional<double> evaluate_fairness(const ModelParams& params, const TabularDataset& ds, FairnessMetric metric) {
    const auto y_hat = predict_labels(params, ds.x);
    return fairness_value(confusion_by_group(ds.y, y_hat, ds.s), metric);
}

}  // namespace fairfed
