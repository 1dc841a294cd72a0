#include "fairfed/fed_algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace fairfed {

ServerState ServerState::initial(ModelParams theta, int total_rounds) {
    if (total_rounds < 1) throw std::invalid_argument("total_rounds must be >= 1");
    ServerState state;
    state.momentum = ModelParams(theta.shape());
    state.theta = std::move(theta);
    state.total_rounds = total_rounds;
    return state;
}

void FairFateConfig::validate() const {
    if (!(beta0 >= 0.0 && beta0 < 1.0)) throw std::invalid_argument("beta0 must lie in [0, 1)");
    if (!(lambda0 > 0.0)) throw std::invalid_argument("lambda0 must be > 0");
    if (!(rho >= 0.0)) throw std::invalid_argument("rho must be >= 0");
    if (!(max_lambda >= 0.0 && max_lambda <= 1.0)) throw std::invalid_argument("max_lambda must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// Client side

ClientUpdate client_local_update(const ModelParams& global, const ClientShard& shard, const TabularDataset& train,
                                 const LocalTrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (shard.indices.empty()) {
        throw std::invalid_argument("client " + std::to_string(shard.client_id) + " has an empty shard");
    }
    const TabularDataset local = subset(train, shard.indices);
    std::vector<double> weights = shard.sample_weights;
    if (weights.empty()) weights.assign(local.size(), 1.0);
    if (weights.size() != local.size()) {
        throw std::invalid_argument("shard sample_weights length does not match its indices");
    }

    Rng rng(seed);
    std::vector<std::size_t> order(local.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::span<const std::size_t> all(order);

    ModelParams params = global;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto batch = all.subspan(start, std::min(cfg.batch_size, order.size() - start));
            const auto lg = loss_and_grad(params, local.x, local.y, weights, batch);
            params = apply_step(params, lg.grad, cfg.learning_rate);
        }
    }
    return ClientUpdate{shard.client_id, std::move(params), shard.size()};
}

std::vector<int> select_client_subset(std::size_t num_clients, std::size_t per_round, Rng& rng) {
    if (per_round < 1 || per_round >= num_clients) {
        throw std::invalid_argument("clients per round must satisfy 1 <= m < K (got m=" + std::to_string(per_round) +
                                    ", K=" + std::to_string(num_clients) + ")");
    }
    std::vector<int> population(num_clients);
    std::iota(population.begin(), population.end(), 0);
    std::vector<int> chosen;
    chosen.reserve(per_round);
    std::sample(population.begin(), population.end(), std::back_inserter(chosen), per_round, rng);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

// ---------------------------------------------------------------------------
// Reweighing

CellCounts cell_counts(const ClientShard& shard, const TabularDataset& train) {
    CellCounts counts{};
    for (auto i : shard.indices) ++counts[cell_index(train.s[i], train.y[i])];
    return counts;
}

std::array<double, 4> reweigh_cell_weights(const CellCounts& counts) {
    const double n = static_cast<double>(counts[0] + counts[1] + counts[2] + counts[3]);
    const std::array<double, 2> s_count{static_cast<double>(counts[0] + counts[1]),
                                        static_cast<double>(counts[2] + counts[3])};
    const std::array<double, 2> y_count{static_cast<double>(counts[0] + counts[2]),
                                        static_cast<double>(counts[1] + counts[3])};
    std::array<double, 4> w{1.0, 1.0, 1.0, 1.0};
    for (int s = 0; s < 2; ++s) {
        for (int y = 0; y < 2; ++y) {
            const auto c = cell_index(s, y);
            if (counts[c] == 0) continue;
            // (n_s / n)(n_y / n) / (n_sy / n)
            w[c] = (s_count[s] * y_count[y]) / (n * static_cast<double>(counts[c]));
        }
    }
    return w;
}

namespace {

std::vector<double> expand_weights(const ClientShard& shard, const TabularDataset& train,
                                   const std::array<double, 4>& cell_weights) {
    std::vector<double> w;
    w.reserve(shard.size());
    for (auto i : shard.indices) w.push_back(cell_weights[cell_index(train.s[i], train.y[i])]);
    return w;
}

}  // namespace

std::vector<double> local_reweigh(const ClientShard& shard, const TabularDataset& train) {
    return expand_weights(shard, train, reweigh_cell_weights(cell_counts(shard, train)));
}

std::array<double, 4> global_reweigh(std::span<const CellCounts> per_client) {
    CellCounts pooled{};
    for (const auto& c : per_client) {
        for (std::size_t i = 0; i < 4; ++i) pooled[i] += c[i];
    }
    return reweigh_cell_weights(pooled);
}

std::vector<std::vector<double>> global_reweigh(std::span<const ClientShard> shards, const TabularDataset& train) {
    std::vector<CellCounts> counts;
    counts.reserve(shards.size());
    for (const auto& shard : shards) counts.push_back(cell_counts(shard, train));
    const auto cell_weights = global_reweigh(counts);
    std::vector<std::vector<double>> out;
    out.reserve(shards.size());
    for (const auto& shard : shards) out.push_back(expand_weights(shard, train, cell_weights));
    return out;
}

// ---------------------------------------------------------------------------
// Server side

namespace {

void require_updates(const ServerState& state, std::span<const ClientUpdate> updates) {
    if (updates.empty()) throw std::invalid_argument("aggregation needs at least one client update");
    for (const auto& u : updates) {
        if (!(u.params.shape() == state.theta.shape())) {
            throw std::invalid_argument("client " + std::to_string(u.client_id) + " returned a mismatched model");
        }
    }
}

ServerState advanced(const ServerState& state, ModelParams theta, ModelParams momentum) {
    ServerState next = state;
    next.theta = std::move(theta);
    next.momentum = std::move(momentum);
    next.round = state.round + 1;
    return next;
}

std::vector<double> normalized(std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw std::invalid_argument("aggregation weights must have a positive sum");
    std::vector<double> out(weights.begin(), weights.end());
    if (std::abs(total - 1.0) > 1e-9) {
        std::clog << "warning: aggregation weights sum to " << total << "; normalizing\n";
        for (auto& w : out) w /= total;
    }
    return out;
}

// Momentum step shared by FedMom, FedDemon and FAIR-FATE's fair update.
ModelParams momentum_step(const ModelParams& v, const ModelParams& direction, double beta) {
    ModelParams next(v.shape());
    auto out = next.values();
    const auto prev = v.values();
    const auto dir = direction.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = beta * prev[i] + (1.0 - beta) * dir[i];
    return next;
}

// theta + alpha + scale * (v - alpha), expressed around the FedAvg point theta + alpha.
// Algebraically this is theta + scale * v + (1 - scale) * alpha; anchoring on the FedAvg
// point makes scale = 0 reproduce aggregate_fedavg bit for bit.
ModelParams blend_with_fedavg(const ModelParams& fedavg_point, const ModelParams& v, const ModelParams& alpha,
                              double scale) {
    ModelParams theta = fedavg_point;
    auto out = theta.values();
    const auto vv = v.values();
    const auto a = alpha.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * (vv[i] - a[i]);
    return theta;
}

}  // namespace

std::vector<double> sample_size_weights(std::span<const ClientUpdate> updates) {
    double n = 0.0;
    for (const auto& u : updates) {
        if (u.num_samples == 0) throw std::invalid_argument("client update with zero samples");
        n += static_cast<double>(u.num_samples);
    }
    std::vector<double> w;
    w.reserve(updates.size());
    for (const auto& u : updates) w.push_back(static_cast<double>(u.num_samples) / n);
    return w;
}

ModelParams weighted_average(std::span<const ClientUpdate> updates, std::span<const double> weights) {
    if (updates.empty() || updates.size() != weights.size()) {
        throw std::invalid_argument("weighted_average: need one weight per update");
    }
    ModelParams out(updates.front().params.shape());
    auto acc = out.values();
    for (std::size_t k = 0; k < updates.size(); ++k) {
        const auto p = updates[k].params.values();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[k] * p[i];
    }
    return out;
}

ModelParams global_delta(const ServerState& state, std::span<const ClientUpdate> updates,
                         std::span<const double> weights) {
    require_updates(state, updates);
    if (weights.size() != updates.size()) throw std::invalid_argument("global_delta: need one weight per update");
    const auto w = normalized(weights);
    ModelParams alpha(state.theta.shape());
    auto acc = alpha.values();
    const auto theta = state.theta.values();
    for (std::size_t k = 0; k < updates.size(); ++k) {
        const auto p = updates[k].params.values();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w[k] * (p[i] - theta[i]);
    }
    return alpha;
}

ServerState aggregate_fedavg(const ServerState& state, std::span<const ClientUpdate> updates) {
    require_updates(state, updates);
    return advanced(state, weighted_average(updates, sample_size_weights(updates)), state.momentum);
}

namespace {

ServerState momentum_round(const ServerState& state, std::span<const ClientUpdate> updates, double beta) {
    require_updates(state, updates);
    const auto weights = sample_size_weights(updates);
    const ModelParams alpha = global_delta(state, updates, weights);
    ModelParams v = momentum_step(state.momentum, alpha, beta);
    // theta + v_{t+1} == (theta + alpha) + beta (v_t - alpha)
    ModelParams theta = blend_with_fedavg(weighted_average(updates, weights), state.momentum, alpha, beta);
    return advanced(state, std::move(theta), std::move(v));
}

}  // namespace

ServerState aggregate_fedmom(const ServerState& state, std::span<const ClientUpdate> updates, double beta) {
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("momentum beta must lie in [0, 1)");
    return momentum_round(state, updates, beta);
}

double beta_decay(double beta0, int t, int total_rounds) {
    if (total_rounds < 1 || t < 1 || t > total_rounds) {
        throw std::invalid_argument("beta_decay: need 1 <= t <= T");
    }
    if (!(beta0 >= 0.0 && beta0 < 1.0)) throw std::invalid_argument("beta0 must lie in [0, 1)");
    const double remaining = 1.0 - static_cast<double>(t) / static_cast<double>(total_rounds);
    return beta0 * remaining / ((1.0 - beta0) + beta0 * remaining);
}

ServerState aggregate_feddemon(const ServerState& state, std::span<const ClientUpdate> updates, double beta0) {
    return momentum_round(state, updates, beta_decay(beta0, state.current_round(), state.total_rounds));
}

FairFilter fair_client_filter(const ServerState& state, std::span<const ClientUpdate> updates,
                              const TabularDataset& validation, FairnessMetric metric) {
    if (validation.size() == 0) throw std::invalid_argument("fair_client_filter: empty validation set");
    FairFilter filter;
    filter.global_value = evaluate_fairness(state.theta, validation, metric);
    filter.client_values.reserve(updates.size());
    for (const auto& u : updates) filter.client_values.push_back(evaluate_fairness(u.params, validation, metric));
    if (filter.global_absent()) return filter;
    for (std::size_t k = 0; k < updates.size(); ++k) {
        const auto& value = filter.client_values[k];
        if (value && *value >= *filter.global_value) {
            filter.members.push_back(k);
            filter.member_values.push_back(*value);
        }
    }
    return filter;
}

ModelParams fair_update_alpha_f(const ServerState& state, std::span<const ClientUpdate> fair_updates,
                                std::span<const double> fairness) {
    if (fair_updates.size() != fairness.size()) {
        throw std::invalid_argument("fair_update_alpha_f: need one fairness value per update");
    }
    const double total = std::accumulate(fairness.begin(), fairness.end(), 0.0);
    if (fair_updates.empty() || !(total > 0.0)) return ModelParams(state.theta.shape());
    std::vector<double> weights(fairness.size());
    std::transform(fairness.begin(), fairness.end(), weights.begin(), [total](double f) { return f / total; });
    return global_delta(state, fair_updates, weights);
}

double lambda_schedule(double lambda0, double rho, int t, double max_lambda) {
    return std::min(lambda0 * std::pow(1.0 + rho, t), max_lambda);
}

ServerState aggregate_fairfate(const ServerState& state, std::span<const ClientUpdate> updates,
                               const TabularDataset& validation, const FairFateConfig& cfg, FairFateTrace* trace) {
    cfg.validate();
    require_updates(state, updates);
    const int t = state.current_round();

    FairFilter filter = fair_client_filter(state, updates, validation, cfg.metric);
    std::vector<ClientUpdate> fair_updates;
    fair_updates.reserve(filter.members.size());
    for (auto k : filter.members) fair_updates.push_back(updates[k]);
    const ModelParams alpha_f = fair_update_alpha_f(state, fair_updates, filter.member_values);

    const auto weights = sample_size_weights(updates);
    const ModelParams alpha_n = global_delta(state, updates, weights);
    const double beta = beta_decay(cfg.beta0, t, state.total_rounds);
    ModelParams v = momentum_step(state.momentum, alpha_f, beta);
    const double lambda = lambda_schedule(cfg.lambda0, cfg.rho, t, cfg.max_lambda);
    // theta + lambda v_{t+1} + (1 - lambda) alpha_N
    ModelParams theta = blend_with_fedavg(weighted_average(updates, weights), v, alpha_n, lambda);

    if (trace) {
        trace->filter = std::move(filter);
        trace->beta = beta;
        trace->lambda = lambda;
    }
    return advanced(state, std::move(theta), std::move(v));
}

ServerState aggregate_fedval(const ServerState& state, std::span<const ClientUpdate> updates,
                             const TabularDataset& validation, FairnessMetric metric, double epsilon) {
    require_updates(state, updates);
    if (!(epsilon > 0.0)) throw std::invalid_argument("FedVal epsilon must be > 0");
    std::vector<double> scores;
    scores.reserve(updates.size());
    double total = 0.0;
    for (const auto& u : updates) {
        const double f = evaluate_fairness(u.params, validation, metric).value_or(0.0) + epsilon;
        scores.push_back(f);
        total += f;
    }
    for (auto& s : scores) s /= total;
    return advanced(state, weighted_average(updates, scores), state.momentum);
}

// ---------------------------------------------------------------------------

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::kFedAvg:
            return "fedavg";
        case Algorithm::kFedMom:
            return "fedmom";
        case Algorithm::kFedDemon:
            return "feddemon";
        case Algorithm::kFedAvgLR:
            return "fedavg_lr";
        case Algorithm::kFedAvgGR:
            return "fedavg_gr";
        case Algorithm::kFedVal:
            return "fedval";
        case Algorithm::kFairFate:
            return "fairfate";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& name) {
    for (auto a : {Algorithm::kFedAvg, Algorithm::kFedMom, Algorithm::kFedDemon, Algorithm::kFedAvgLR,
                   Algorithm::kFedAvgGR, Algorithm::kFedVal, Algorithm::kFairFate}) {
        if (to_string(a) == name) return a;
    }
    throw std::invalid_argument("unknown algorithm '" + name + "'");
}

std::optional<FairnessMetric> AlgorithmConfig::metric() const {
    if (algorithm == Algorithm::kFedVal || algorithm == Algorithm::kFairFate) return fairfate.metric;
    return std::nullopt;
}

bool AlgorithmConfig::needs_validation() const { return metric().has_value(); }

ServerState aggregate(const AlgorithmConfig& cfg, const ServerState& state, std::span<const ClientUpdate> updates,
                      const TabularDataset& validation) {
    switch (cfg.algorithm) {
        case Algorithm::kFedAvg:
        case Algorithm::kFedAvgLR:
        case Algorithm::kFedAvgGR:
            return aggregate_fedavg(state, updates);
        case Algorithm::kFedMom:
            return aggregate_fedmom(state, updates, cfg.beta);
        case Algorithm::kFedDemon:
            return aggregate_feddemon(state, updates, cfg.beta);
        case Algorithm::kFedVal:
            return aggregate_fedval(state, updates, validation, cfg.fairfate.metric, cfg.fedval_epsilon);
        case Algorithm::kFairFate:
            return aggregate_fairfate(state, updates, validation, cfg.fairfate);
    }
    throw std::logic_error("unhandled algorithm");
}

}  // namespace fairfed
