#pragma once

// Toy data builders and independent oracles shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fairfed/data_pipeline.hpp"
#include "fairfed/experiment.hpp"
#include "fairfed/nn_core.hpp"

namespace fairfed::testing {

inline DatasetSchema toy_schema() {
    DatasetSchema schema;
    schema.name = "toy";
    schema.features = {{"x1", FeatureKind::kNumeric}, {"x2", FeatureKind::kNumeric}, {"color", FeatureKind::kCategorical}};
    schema.sensitive_column = "group";
    schema.privileged_value = "A";
    schema.target_column = "label";
    schema.positive_value = "yes";
    return schema;
}

// Labels depend on x1 and on the group so that a model has something to learn
// and a fairness gap to show.
inline RawTable toy_table(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const char* colors[] = {"red", "green", "blue"};
    RawTable t;
    t.columns = {"x1", "x2", "color", "group", "label"};
    for (std::size_t i = 0; i < n; ++i) {
        const bool priv = u(rng) < 0.6;
        const double x1 = u(rng) * 10.0;
        const double x2 = u(rng) * 3.0 - 1.0;
        const double score = x1 / 10.0 + (priv ? 0.25 : -0.1) + 0.3 * (u(rng) - 0.5);
        char b1[32], b2[32];
        std::snprintf(b1, sizeof b1, "%.4f", x1);
        std::snprintf(b2, sizeof b2, "%.4f", x2);
        t.rows.push_back({b1, b2, colors[rng() % 3], priv ? "A" : "B", score > 0.55 ? "yes" : "no"});
    }
    return t;
}

inline std::string toy_csv(const RawTable& t) {
    std::string out;
    for (std::size_t c = 0; c < t.columns.size(); ++c) out += (c ? "," : "") + t.columns[c];
    out += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
        out += "\n";
    }
    return out;
}

inline ExperimentConfig toy_config(std::size_t clients = 5, std::size_t per_round = 3, int rounds = 20) {
    ExperimentConfig cfg;
    cfg.dataset = "toy";
    cfg.schema = toy_schema();
    cfg.partition_mode = PartitionMode::kDirichlet;
    cfg.alpha = 0.5;
    cfg.num_clients = clients;
    cfg.clients_per_round = per_round;
    cfg.rounds = rounds;
    cfg.runs = 2;
    cfg.local.epochs = 2;
    cfg.seed = 7;
    return cfg;
}

// Random dataset with k-dim features in [-1, 1] and random labels/groups.
inline TabularDataset random_dataset(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TabularDataset ds;
    ds.x = Matrix(n, dim);
    for (auto& v : ds.x.data) v = u(rng);
    for (std::size_t i = 0; i < n; ++i) {
        ds.y.push_back(static_cast<int>(rng() % 2));
        ds.s.push_back(static_cast<int>(rng() % 2));
    }
    return ds;
}

// Central finite differences of the weighted loss.
inline std::vector<double> numeric_gradient(const ModelParams& params, const Matrix& x, const std::vector<int>& y,
                                            const std::vector<double>& w, double h = 1e-6) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        ModelParams plus = params, minus = params;
        plus[i] += h;
        minus[i] -= h;
        g[i] = (loss_and_grad(plus, x, y, w).loss - loss_and_grad(minus, x, y, w).loss) / (2.0 * h);
    }
    return g;
}

struct BruteReport {
    double acc = 0.0;
    double f1 = 0.0;
    std::optional<double> sp, eo, eqo;
};

// Straight from the definitions: P[yhat=1 | s], P[yhat=1 | y=1, s], P[yhat=1 | y=0, s].
inline BruteReport brute_force_report(const std::vector<int>& y, const std::vector<int>& yhat,
                                      const std::vector<int>& s) {
    auto ratio = [](double a, double b) -> double {
        if (a == 0.0 && b == 0.0) return 1.0;
        if (a == 0.0 || b == 0.0) return 0.0;
        return std::min(a, b) / std::max(a, b);
    };
    auto rate = [&](int group, int cls) -> std::optional<double> {
        std::size_t num = 0, den = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (s[i] != group || (cls >= 0 && y[i] != cls)) continue;
            ++den;
            if (yhat[i] == 1) ++num;
        }
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    BruteReport r;
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        correct += y[i] == yhat[i];
        tp += y[i] == 1 && yhat[i] == 1;
        fp += y[i] == 0 && yhat[i] == 1;
        fn += y[i] == 1 && yhat[i] == 0;
    }
    r.acc = static_cast<double>(correct) / static_cast<double>(y.size());
    r.f1 = tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    const auto p0 = rate(0, -1), p1 = rate(1, -1);
    if (p0 && p1) r.sp = ratio(*p0, *p1);
    const auto t0 = rate(0, 1), t1 = rate(1, 1);
    if (t0 && t1) r.eo = ratio(*t0, *t1);
    const auto f0 = rate(0, 0), f1 = rate(1, 0);
    if (t0 && t1 && f0 && f1) r.eqo = (ratio(*t0, *t1) + ratio(*f0, *f1)) / 2.0;
    return r;
}

// Exact one-sided p-value P[W+ >= observed] by enumerating all 2^n sign patterns.
inline double enumerate_wilcoxon_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    }
    const std::size_t n = d.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return std::fabs(d[i]) < std::fabs(d[j]); });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
        i = j + 1;
    }
    double observed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] > 0) observed += rank[i];
    }
    std::size_t hits = 0;
    const std::size_t patterns = std::size_t{1} << n;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask >> i & 1) w += rank[i];
        }
        if (w >= observed - 1e-9) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(patterns);
}

}  // namespace fairfed::testing
