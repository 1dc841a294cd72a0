#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairfed/nn_core.hpp"
#include "fairfed/rng.hpp"
#include "json.hpp"

namespace fairfed {

enum class FeatureKind { kNumeric, kCategorical };

struct FeatureColumn {
    std::string name;
    FeatureKind kind = FeatureKind::kNumeric;
};

/// Row-level filter applied at ingestion. A row is kept only if the column value
/// lies in [min, max] (numeric bounds, when given), is not listed in `exclude`,
/// and is listed in `include` (when non-empty).
struct RowFilter {
    std::string column;
    std::optional<double> min;
    std::optional<double> max;
    std::vector<std::string> include;
    std::vector<std::string> exclude;
};

struct DatasetSchema {
    std::string name;
    std::filesystem::path data_path;
    std::vector<FeatureColumn> features;
    std::string sensitive_column;
    std::string privileged_value;
    std::string target_column;
    std::string positive_value;
    // The binary sensitive attribute is appended as the last model input when set.
    bool sensitive_as_feature = true;
    // Columns that must be present and non-missing, without being model inputs.
    std::vector<std::string> required_columns;
    std::vector<RowFilter> filters;
    std::vector<std::string> missing_values{"", "?", "NA"};
    // Federation size defaults for this benchmark (0 = unset).
    std::size_t default_clients = 0;
    std::size_t default_clients_per_round = 0;

    void validate() const;
    /// Every column the ingestion step needs, each listed once.
    std::vector<std::string> referenced_columns() const;
};

/// Parses a schema tree. Relative `data` paths resolve against `base_dir`.
DatasetSchema schema_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
DatasetSchema load_schema(const std::filesystem::path& path);
nlohmann::json schema_to_json(const DatasetSchema& schema);

/// Typed raw rows restricted to the schema's columns.
struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::size_t dropped_missing = 0;
    std::size_t dropped_filtered = 0;

    std::size_t column_index(const std::string& name) const;
    std::size_t size() const { return rows.size(); }
};

RawTable ingest_csv(const std::filesystem::path& path, const DatasetSchema& schema);
RawTable ingest_csv(std::istream& in, const DatasetSchema& schema);

struct TabularDataset {
    Matrix x;
    std::vector<int> y;
    std::vector<int> s;
    std::vector<std::string> feature_names;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols; }
};

TabularDataset subset(const TabularDataset& ds, std::span<const std::size_t> rows);

struct ScalerStats {
    std::string column;
    std::size_t feature_index = 0;
    double min = 0.0;
    double max = 0.0;
};

struct SplitBundle {
    TabularDataset train;
    TabularDataset validation;
    TabularDataset test;
    std::vector<ScalerStats> scaler_stats;
    // Raw-table row each split row came from.
    std::vector<std::size_t> train_origin;
    std::vector<std::size_t> validation_origin;
    std::vector<std::size_t> test_origin;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;
};

/// 60/20/20 with validation and test rounded to nearest; train takes the remainder.
SplitSizes split_sizes(std::size_t n);

SplitBundle preprocess_and_split(const RawTable& raw, const DatasetSchema& schema, std::uint64_t seed);

/// Encodes the whole table without splitting (scaler fitted on every row).
TabularDataset encode_full(const RawTable& raw, const DatasetSchema& schema);

struct ClientShard {
    int client_id = 0;
    std::vector<std::size_t> indices;
    std::vector<double> sample_weights;

    std::size_t size() const { return indices.size(); }
};

enum class PartitionMode { kDirichlet, kIid };

struct PartitionSpec {
    PartitionMode mode = PartitionMode::kDirichlet;
    double alpha = 0.5;
    std::size_t num_clients = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Index of the (s, y) cell: 2*s + y.
inline constexpr std::size_t cell_index(int s, int y) { return static_cast<std::size_t>(2 * s + y); }

struct Partition {
    std::vector<ClientShard> shards;
    // Dirichlet draw used for each (s, y) cell; empty in iid mode.
    std::array<std::vector<double>, 4> cell_proportions;
    int redraws = 0;
};

inline constexpr int kMaxPartitionRedraws = 100;

/// Draws a probability vector from Dir(alpha * 1_k).
std::vector<double> dirichlet_draw(double alpha, std::size_t k, Rng& rng);

/// Integer block sizes proportional to `proportions` that sum exactly to `total`.
/// Remainders go to the largest fractional parts, lower index first on ties.
std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> proportions);

Partition partition_clients(const TabularDataset& train, const PartitionSpec& spec);

struct DatasetSummary {
    std::size_t rows = 0;
    // Share of rows in each (s, y) cell, indexed by cell_index.
    std::array<double, 4> proportions{};
    double positive_share = 0.0;
    // P[Y=1|S=0] / P[Y=1|S=1]
    double sp_star = 0.0;
};

DatasetSummary dataset_summary(const TabularDataset& ds);

}  // namespace fairfed
