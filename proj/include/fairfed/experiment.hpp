#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairfed/data_pipeline.hpp"
#include "fairfed/fairness_metrics.hpp"
#include "fairfed/fed_algorithms.hpp"
#include "fairfed/nn_core.hpp"
#include "json.hpp"

namespace fairfed {

/// Hyperparameter value lists. A plain run uses the first entry of each list;
/// grid mode runs the cross-product of the lists the algorithm actually reads.
struct HyperGrid {
    std::vector<double> beta{0.8, 0.9, 0.99};
    std::vector<double> beta0{0.8, 0.9, 0.99};
    std::vector<double> lambda0{0.1, 0.5};
    std::vector<double> rho{0.04, 0.05};
    std::vector<double> max_lambda{0.8, 0.9, 1.0};
    std::vector<FairnessMetric> metric{FairnessMetric::kSP};
    std::vector<double> fedval_epsilon{kFedValEpsilon};
};

struct ExperimentConfig {
    std::string dataset;
    std::filesystem::path schema_path;
    DatasetSchema schema;
    PartitionMode partition_mode = PartitionMode::kDirichlet;
    double alpha = 0.5;
    std::size_t num_clients = 10;
    std::size_t clients_per_round = 3;
    int rounds = 100;
    int runs = 10;
    LocalTrainConfig local;
    std::size_t hidden_dim = 10;
    Algorithm algorithm = Algorithm::kFedAvg;
    HyperGrid grid;
    // Fairness metric used to rank grid points for algorithms without their own F.
    FairnessMetric selection_metric = FairnessMetric::kSP;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;

    /// Hyperparameter points for this algorithm, in a fixed nested-loop order.
    std::vector<AlgorithmConfig> grid_points() const;
    AlgorithmConfig default_point() const;
};

/// Parses a config tree. Relative schema paths resolve against `base_dir`; the schema
/// file is loaded and its federation defaults fill in missing client counts.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Short stable label for a grid point, usable as a directory name.
std::string point_label(const AlgorithmConfig& point);
nlohmann::json point_to_json(const AlgorithmConfig& point);

struct RoundRecord {
    int run = 0;
    int round = 0;
    FairnessReport test;
    FairnessReport validation;

    bool operator==(const RoundRecord&) const = default;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
    std::size_t count = 0;
    std::vector<std::optional<double>> per_run;
};

/// Final-round statistics over runs, keyed by acc, f1, sp, eo, eqo.
struct RunSummary {
    int runs = 0;
    int final_round = 0;
    std::map<std::string, MetricSummary> metrics;

    const MetricSummary& at(const std::string& key) const;
};

inline const std::vector<std::string>& metric_keys() {
    static const std::vector<std::string> keys{"acc", "f1", "sp", "eo", "eqo"};
    return keys;
}

std::optional<double> report_value(const FairnessReport& r, const std::string& key);
/// Summary key of a fairness metric ("sp", "eo", "eqo").
std::string report_key(FairnessMetric m);

struct ExperimentResult {
    std::vector<RoundRecord> records;
    RunSummary summary;
    std::vector<ModelParams> final_params;
};

/// Loads the dataset named by the config's schema.
RawTable load_dataset(const ExperimentConfig& cfg);

/// Executes one run (0-based index). Deterministic in (config, point, run).
ExperimentResult run_single(const ExperimentConfig& cfg, const RawTable& raw, const AlgorithmConfig& point, int run);

/// All runs of one hyperparameter point, spread over `threads` workers (0 = worker_count()).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RawTable& raw, const AlgorithmConfig& point,
                                std::size_t threads = 0);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Sample mean and (n-1) standard deviation of each metric at round `final_round`.
RunSummary summarize_runs(const std::vector<RoundRecord>& records, int runs, int final_round);

/// Accuracy slack allowed below FedAvg when picking the fairest grid point.
inline constexpr double kSelectionAccuracySlack = 0.07;

struct GridPoint {
    AlgorithmConfig config;
    std::string label;
    ExperimentResult result;
};

struct GridResult {
    std::vector<GridPoint> points;
    ExperimentResult baseline;
    std::size_t selected = 0;
    FairnessMetric selection_metric = FairnessMetric::kSP;
};

/// Picks the point with the highest mean fairness among those whose mean accuracy is
/// at least baseline accuracy minus the slack; falls back to the most accurate point.
std::size_t select_grid_point(const std::vector<GridPoint>& points, const RunSummary& baseline,
                              FairnessMetric metric, double slack = kSelectionAccuracySlack);

GridResult run_grid(const ExperimentConfig& cfg, const RawTable& raw, std::size_t threads = 0);

/// Worker cap: FAIRFED_THREADS when set to a positive integer, else the hardware concurrency.
std::size_t worker_count();

/// Runs task(i) for i in [0, n) on up to `threads` workers. Exceptions are rethrown on the caller.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& task);

// ---------------------------------------------------------------------------
// Results files

inline constexpr const char* kRoundsCsvHeader = "run,round,acc,f1,sp,eo,eqo";

void write_rounds_csv(const std::vector<RoundRecord>& records, std::ostream& out);
/// Parses a rounds.csv stream; only the test-set fields are restored.
std::vector<RoundRecord> read_rounds_csv(std::istream& in);

nlohmann::json summary_to_json(const RunSummary& summary, const nlohmann::json& config,
                               const std::optional<AlgorithmConfig>& point);

/// Writes rounds.csv and summary.json into out_dir (created if needed).
void write_results(const std::vector<RoundRecord>& records, const RunSummary& summary, const nlohmann::json& config,
                   const std::optional<AlgorithmConfig>& point, const std::filesystem::path& out_dir);

/// Writes every grid point under out_dir/points/<label>, the FedAvg baseline under
/// out_dir/baseline_fedavg, and out_dir/grid.json listing summaries and the selection.
void write_grid_results(const GridResult& grid, const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace fairfed
