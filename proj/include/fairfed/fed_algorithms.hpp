#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairfed/data_pipeline.hpp"
#include "fairfed/fairness_metrics.hpp"
#include "fairfed/nn_core.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

/// Server-side state between rounds. `round` counts completed rounds, so the
/// round being aggregated is `round + 1` (rounds are 1-indexed).
struct ServerState {
    ModelParams theta;
    ModelParams momentum;
    int round = 0;
    int total_rounds = 0;

    static ServerState initial(ModelParams theta, int total_rounds);
    int current_round() const { return round + 1; }
};

struct FairFateConfig {
    double beta0 = 0.9;
    double lambda0 = 0.1;
    double rho = 0.05;
    double max_lambda = 0.9;
    FairnessMetric metric = FairnessMetric::kSP;

    void validate() const;
};

struct ClientUpdate {
    int client_id = 0;
    ModelParams params;
    std::size_t num_samples = 0;
};

// ---------------------------------------------------------------------------
// Client side

/// E epochs of mini-batch SGD on the shard, starting from `global`. Batch order is
/// reshuffled every epoch from an RNG seeded with `seed`; the last partial batch is kept.
ClientUpdate client_local_update(const ModelParams& global, const ClientShard& shard, const TabularDataset& train,
                                 const LocalTrainConfig& cfg, std::uint64_t seed);

/// Uniform sample of `per_round` distinct ids out of [0, num_clients), sorted ascending.
std::vector<int> select_client_subset(std::size_t num_clients, std::size_t per_round, Rng& rng);

// ---------------------------------------------------------------------------
// Reweighing (local and global variants of the expected/observed cell ratio)

using CellCounts = std::array<std::size_t, 4>;

CellCounts cell_counts(const ClientShard& shard, const TabularDataset& train);

/// w(s,y) = P(s) P(y) / P(s,y). Empty cells get weight 1.
std::array<double, 4> reweigh_cell_weights(const CellCounts& counts);

/// Per-row weights for the shard, probabilities estimated on the shard itself.
std::vector<double> local_reweigh(const ClientShard& shard, const TabularDataset& train);

/// Cell weights estimated from counts pooled over all given clients.
std::array<double, 4> global_reweigh(std::span<const CellCounts> per_client);

/// Pools the shards' counts and pushes the resulting weights back to every shard row.
std::vector<std::vector<double>> global_reweigh(std::span<const ClientShard> shards, const TabularDataset& train);

// ---------------------------------------------------------------------------
// Server side

/// n_k / n for each update.
std::vector<double> sample_size_weights(std::span<const ClientUpdate> updates);

/// sum_k w_k * theta_k
ModelParams weighted_average(std::span<const ClientUpdate> updates, std::span<const double> weights);

/// sum_k w_k * (theta_k - theta). Weights that do not sum to 1 are normalized with a warning.
ModelParams global_delta(const ServerState& state, std::span<const ClientUpdate> updates,
                         std::span<const double> weights);

ServerState aggregate_fedavg(const ServerState& state, std::span<const ClientUpdate> updates);

ServerState aggregate_fedmom(const ServerState& state, std::span<const ClientUpdate> updates, double beta);

/// beta_t = beta0 (1 - t/T) / ((1 - beta0) + beta0 (1 - t/T))
double beta_decay(double beta0, int t, int total_rounds);

ServerState aggregate_feddemon(const ServerState& state, std::span<const ClientUpdate> updates, double beta0);

struct FairFilter {
    std::optional<double> global_value;
    // Validation fairness of every update, in input order.
    std::vector<std::optional<double>> client_values;
    // Indices into the update list of clients at least as fair as the global model.
    std::vector<std::size_t> members;
    // Fairness value of each member, aligned with `members`.
    std::vector<double> member_values;

    bool global_absent() const { return !global_value.has_value(); }
};

FairFilter fair_client_filter(const ServerState& state, std::span<const ClientUpdate> updates,
                              const TabularDataset& validation, FairnessMetric metric);

/// sum_k (F_k / F_total) (theta_k - theta). Zero when the set is empty or F_total is 0.
ModelParams fair_update_alpha_f(const ServerState& state, std::span<const ClientUpdate> fair_updates,
                                std::span<const double> fairness);

/// min(lambda0 (1 + rho)^t, max_lambda)
double lambda_schedule(double lambda0, double rho, int t, double max_lambda);

struct FairFateTrace {
    FairFilter filter;
    double beta = 0.0;
    double lambda = 0.0;
};

ServerState aggregate_fairfate(const ServerState& state, std::span<const ClientUpdate> updates,
                               const TabularDataset& validation, const FairFateConfig& cfg,
                               FairFateTrace* trace = nullptr);

inline constexpr double kFedValEpsilon = 0.01;

ServerState aggregate_fedval(const ServerState& state, std::span<const ClientUpdate> updates,
                             const TabularDataset& validation, FairnessMetric metric,
                             double epsilon = kFedValEpsilon);

// ---------------------------------------------------------------------------
// Algorithm selection

enum class Algorithm { kFedAvg, kFedMom, kFedDemon, kFedAvgLR, kFedAvgGR, kFedVal, kFairFate };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

/// Resolved hyperparameters for one algorithm instance.
struct AlgorithmConfig {
    Algorithm algorithm = Algorithm::kFedAvg;
    // FedMom momentum, or the initial momentum for FedDemon.
    double beta = 0.9;
    FairFateConfig fairfate;
    double fedval_epsilon = kFedValEpsilon;

    /// Metric the algorithm optimizes, if any.
    std::optional<FairnessMetric> metric() const;
    bool needs_validation() const;
};

/// Dispatches one round of server aggregation.
ServerState aggregate(const AlgorithmConfig& cfg, const ServerState& state, std::span<const ClientUpdate> updates,
                      const TabularDataset& validation);

}  // namespace fairfed
