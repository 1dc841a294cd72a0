#include "fairfed/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "fairfed/csv.hpp"

namespace fairfed {

namespace {

std::string trim(std::string_view sv) {
    const auto first = sv.find_first_not_of(" \t");
    if (first == std::string_view::npos) return {};
    const auto last = sv.find_last_not_of(" \t");
    return std::string(sv.substr(first, last - first + 1));
}

std::optional<double> parse_number(const std::string& text) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    if (begin != end && *begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
    return value;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

FeatureKind parse_kind(const std::string& kind) {
    if (kind == "numeric") return FeatureKind::kNumeric;
    if (kind == "categorical") return FeatureKind::kCategorical;
    throw std::invalid_argument("unknown feature kind '" + kind + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

void DatasetSchema::validate() const {
    if (features.empty()) throw std::invalid_argument("schema '" + name + "': feature list is empty");
    if (sensitive_column.empty()) throw std::invalid_argument("schema '" + name + "': sensitive column not set");
    if (target_column.empty()) throw std::invalid_argument("schema '" + name + "': target column not set");
    if (sensitive_column == target_column) {
        throw std::invalid_argument("schema '" + name + "': sensitive and target columns coincide");
    }
    std::set<std::string> seen;
    for (const auto& f : features) {
        if (f.name == sensitive_column || f.name == target_column) {
            throw std::invalid_argument("schema '" + name + "': column '" + f.name +
                                        "' cannot be both a feature and the sensitive/target column");
        }
        if (!seen.insert(f.name).second) {
            throw std::invalid_argument("schema '" + name + "': duplicate feature '" + f.name + "'");
        }
    }
}

std::vector<std::string> DatasetSchema::referenced_columns() const {
    std::vector<std::string> cols;
    auto add = [&](const std::string& c) {
        if (!contains(cols, c)) cols.push_back(c);
    };
    for (const auto& f : features) add(f.name);
    add(sensitive_column);
    add(target_column);
    for (const auto& r : required_columns) add(r);
    return cols;
}

DatasetSchema schema_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    DatasetSchema schema;
    schema.name = j.value("name", std::string{});
    if (j.contains("data")) {
        std::filesystem::path p = j.at("data").get<std::string>();
        schema.data_path = p.is_absolute() ? p : base_dir / p;
    }
    for (const auto& f : j.at("features")) {
        schema.features.push_back({f.at("name").get<std::string>(), parse_kind(f.value("kind", "numeric"))});
    }
    const auto& sens = j.at("sensitive");
    schema.sensitive_column = sens.at("column").get<std::string>();
    schema.privileged_value = sens.at("privileged").get<std::string>();
    const auto& target = j.at("target");
    schema.target_column = target.at("column").get<std::string>();
    schema.positive_value = target.at("positive").get<std::string>();
    schema.sensitive_as_feature = j.value("sensitive_as_feature", true);
    if (j.contains("required")) schema.required_columns = j.at("required").get<std::vector<std::string>>();
    if (j.contains("missing_values")) schema.missing_values = j.at("missing_values").get<std::vector<std::string>>();
    if (j.contains("filters")) {
        for (const auto& f : j.at("filters")) {
            RowFilter filter;
            filter.column = f.at("column").get<std::string>();
            if (f.contains("min")) filter.min = f.at("min").get<double>();
            if (f.contains("max")) filter.max = f.at("max").get<double>();
            if (f.contains("include")) filter.include = f.at("include").get<std::vector<std::string>>();
            if (f.contains("exclude")) filter.exclude = f.at("exclude").get<std::vector<std::string>>();
            schema.filters.push_back(std::move(filter));
        }
    }
    if (j.contains("federation")) {
        const auto& fed = j.at("federation");
        schema.default_clients = fed.value("clients", std::size_t{0});
        schema.default_clients_per_round = fed.value("clients_per_round", std::size_t{0});
    }
    schema.validate();
    return schema;
}

DatasetSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open schema file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("invalid schema file " + path.string() + ": " + e.what());
    }
    return schema_from_json(j, path.parent_path());
}

nlohmann::json schema_to_json(const DatasetSchema& schema) {
    nlohmann::json j;
    j["name"] = schema.name;
    j["data"] = schema.data_path.string();
    j["features"] = nlohmann::json::array();
    for (const auto& f : schema.features) {
        j["features"].push_back(
            {{"name", f.name}, {"kind", f.kind == FeatureKind::kNumeric ? "numeric" : "categorical"}});
    }
    j["sensitive"] = {{"column", schema.sensitive_column}, {"privileged", schema.privileged_value}};
    j["target"] = {{"column", schema.target_column}, {"positive", schema.positive_value}};
    j["sensitive_as_feature"] = schema.sensitive_as_feature;
    j["required"] = schema.required_columns;
    j["missing_values"] = schema.missing_values;
    j["filters"] = nlohmann::json::array();
    for (const auto& f : schema.filters) {
        nlohmann::json fj{{"column", f.column}};
        if (f.min) fj["min"] = *f.min;
        if (f.max) fj["max"] = *f.max;
        if (!f.include.empty()) fj["include"] = f.include;
        if (!f.exclude.empty()) fj["exclude"] = f.exclude;
        j["filters"].push_back(fj);
    }
    return j;
}

// ---------------------------------------------------------------------------
// Ingestion

std::size_t RawTable::column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::out_of_range("raw table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

RawTable ingest_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open data file " + path.string());
    return ingest_csv(in, schema);
}

RawTable ingest_csv(std::istream& in, const DatasetSchema& schema) {
    schema.validate();
    std::vector<std::string> header;
    if (!csv::read_record(in, header) || (header.size() == 1 && trim(header[0]).empty())) {
        throw std::runtime_error("no data rows");
    }
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

    // First occurrence wins for duplicated header names.
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < header.size(); ++i) position.try_emplace(trim(header[i]), i);
    auto locate = [&](const std::string& col) {
        const auto it = position.find(col);
        if (it == position.end()) throw std::runtime_error("missing column '" + col + "'");
        return it->second;
    };

    RawTable table;
    table.columns = schema.referenced_columns();
    std::vector<std::size_t> source;
    for (const auto& c : table.columns) source.push_back(locate(c));
    std::vector<std::size_t> filter_source;
    for (const auto& f : schema.filters) filter_source.push_back(locate(f.column));

    std::vector<bool> numeric(table.columns.size(), false);
    for (const auto& f : schema.features) {
        if (f.kind == FeatureKind::kNumeric) {
            numeric[static_cast<std::size_t>(
                std::find(table.columns.begin(), table.columns.end(), f.name) - table.columns.begin())] = true;
        }
    }

    auto cell = [](const std::vector<std::string>& rec, std::size_t i) {
        return i < rec.size() ? trim(rec[i]) : std::string{};
    };

    std::size_t data_rows = 0;
    std::size_t line = 1;
    std::vector<std::string> rec;
    while (csv::read_record(in, rec)) {
        ++line;
        if (rec.size() == 1 && trim(rec[0]).empty()) continue;
        ++data_rows;

        bool keep = true;
        for (std::size_t fi = 0; fi < schema.filters.size() && keep; ++fi) {
            const auto& f = schema.filters[fi];
            const std::string v = cell(rec, filter_source[fi]);
            if (f.min || f.max) {
                const auto num = parse_number(v);
                if (!num || (f.min && *num < *f.min) || (f.max && *num > *f.max)) keep = false;
            }
            if (!f.include.empty() && !contains(f.include, v)) keep = false;
            if (contains(f.exclude, v)) keep = false;
        }
        if (!keep) {
            ++table.dropped_filtered;
            continue;
        }

        std::vector<std::string> row;
        row.reserve(source.size());
        bool missing = false;
        for (std::size_t c = 0; c < source.size(); ++c) {
            std::string v = cell(rec, source[c]);
            if (source[c] >= rec.size() || contains(schema.missing_values, v)) {
                missing = true;
                break;
            }
            if (numeric[c] && !parse_number(v)) {
                throw std::runtime_error("line " + std::to_string(line) + ": cannot parse numeric value '" + v +
                                         "' in column '" + table.columns[c] + "'");
            }
            row.push_back(std::move(v));
        }
        if (missing) {
            ++table.dropped_missing;
            continue;
        }
        table.rows.push_back(std::move(row));
    }
    if (data_rows == 0) throw std::runtime_error("no data rows");
    if (table.rows.empty()) throw std::runtime_error("no data rows left after filtering and missing-value removal");
    return table;
}

// ---------------------------------------------------------------------------
// Encoding and splitting

TabularDataset subset(const TabularDataset& ds, std::span<const std::size_t> rows) {
    TabularDataset out;
    out.feature_names = ds.feature_names;
    out.x = Matrix(rows.size(), ds.x.cols);
    out.y.reserve(rows.size());
    out.s.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = ds.x.row(rows[i]);
        std::copy(src.begin(), src.end(), out.x.row(i).begin());
        out.y.push_back(ds.y[rows[i]]);
        out.s.push_back(ds.s[rows[i]]);
    }
    return out;
}

SplitSizes split_sizes(std::size_t n) {
    SplitSizes sizes;
    sizes.validation = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    sizes.test = sizes.validation;
    sizes.train = n - sizes.validation - sizes.test;
    return sizes;
}

namespace {

// Column layout of the encoded feature matrix, fixed from the full raw table.
struct Encoder {
    struct Slot {
        std::size_t raw_column = 0;
        FeatureKind kind = FeatureKind::kNumeric;
        std::size_t offset = 0;
        std::vector<std::string> categories;
    };
    std::vector<Slot> slots;
    std::size_t sensitive_raw = 0;
    std::size_t target_raw = 0;
    std::optional<std::size_t> sensitive_feature;
    std::size_t width = 0;
    std::vector<std::string> names;

    Encoder(const RawTable& raw, const DatasetSchema& schema) {
        sensitive_raw = raw.column_index(schema.sensitive_column);
        target_raw = raw.column_index(schema.target_column);
        for (const auto& f : schema.features) {
            Slot slot;
            slot.raw_column = raw.column_index(f.name);
            slot.kind = f.kind;
            slot.offset = width;
            if (f.kind == FeatureKind::kCategorical) {
                std::set<std::string> cats;
                for (const auto& r : raw.rows) cats.insert(r[slot.raw_column]);
                slot.categories.assign(cats.begin(), cats.end());
                for (const auto& c : slot.categories) names.push_back(f.name + "=" + c);
                width += slot.categories.size();
            } else {
                names.push_back(f.name);
                width += 1;
            }
            slots.push_back(std::move(slot));
        }
        if (schema.sensitive_as_feature) {
            sensitive_feature = width;
            names.push_back(schema.sensitive_column);
            width += 1;
        }

        bool s0 = false, s1 = false, y0 = false, y1 = false;
        for (const auto& r : raw.rows) {
            (r[sensitive_raw] == schema.privileged_value ? s1 : s0) = true;
            (r[target_raw] == schema.positive_value ? y1 : y0) = true;
        }
        if (!(s0 && s1)) {
            throw std::runtime_error("sensitive column '" + schema.sensitive_column + "' has a single distinct value");
        }
        if (!(y0 && y1)) {
            throw std::runtime_error("target column '" + schema.target_column + "' has a single distinct value");
        }
    }

    // Unscaled encoding of selected rows, in the given order.
    TabularDataset encode(const RawTable& raw, const DatasetSchema& schema,
                          std::span<const std::size_t> rows) const {
        TabularDataset ds;
        ds.feature_names = names;
        ds.x = Matrix(rows.size(), width);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = raw.rows[rows[i]];
            for (const auto& slot : slots) {
                const auto& v = r[slot.raw_column];
                if (slot.kind == FeatureKind::kNumeric) {
                    double num = 0.0;
                    std::from_chars(v.data() + (v.starts_with('+') ? 1 : 0), v.data() + v.size(), num);
                    ds.x.at(i, slot.offset) = num;
                } else {
                    const auto it = std::lower_bound(slot.categories.begin(), slot.categories.end(), v);
                    ds.x.at(i, slot.offset + static_cast<std::size_t>(it - slot.categories.begin())) = 1.0;
                }
            }
            const int s = r[sensitive_raw] == schema.privileged_value ? 1 : 0;
            ds.s.push_back(s);
            ds.y.push_back(r[target_raw] == schema.positive_value ? 1 : 0);
            if (sensitive_feature) ds.x.at(i, *sensitive_feature) = s;
        }
        return ds;
    }

    std::vector<ScalerStats> fit_scaler(const TabularDataset& fit_on, const DatasetSchema& schema) const {
        std::vector<ScalerStats> stats;
        for (std::size_t k = 0; k < slots.size(); ++k) {
            if (slots[k].kind != FeatureKind::kNumeric) continue;
            ScalerStats st{schema.features[k].name, slots[k].offset, 0.0, 0.0};
            if (fit_on.size() > 0) {
                st.min = st.max = fit_on.x.at(0, st.feature_index);
                for (std::size_t i = 1; i < fit_on.size(); ++i) {
                    st.min = std::min(st.min, fit_on.x.at(i, st.feature_index));
                    st.max = std::max(st.max, fit_on.x.at(i, st.feature_index));
                }
            }
            stats.push_back(st);
        }
        return stats;
    }
};

void apply_scaler(TabularDataset& ds, const std::vector<ScalerStats>& stats) {
    for (const auto& st : stats) {
        const double range = st.max - st.min;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            double& v = ds.x.at(i, st.feature_index);
            // A column constant on the fit split maps to 0.
            v = range > 0.0 ? (v - st.min) / range : 0.0;
        }
    }
}

}  // namespace

SplitBundle preprocess_and_split(const RawTable& raw, const DatasetSchema& schema, std::uint64_t seed) {
    if (raw.rows.empty()) throw std::invalid_argument("cannot split an empty table");
    const Encoder encoder(raw, schema);

    std::vector<std::size_t> order(raw.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto sizes = split_sizes(raw.size());
    SplitBundle bundle;
    bundle.train_origin.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sizes.train));
    bundle.validation_origin.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train),
                                    order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.validation));
    bundle.test_origin.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.validation),
                              order.end());

    bundle.train = encoder.encode(raw, schema, bundle.train_origin);
    bundle.validation = encoder.encode(raw, schema, bundle.validation_origin);
    bundle.test = encoder.encode(raw, schema, bundle.test_origin);
    bundle.scaler_stats = encoder.fit_scaler(bundle.train, schema);
    apply_scaler(bundle.train, bundle.scaler_stats);
    apply_scaler(bundle.validation, bundle.scaler_stats);
    apply_scaler(bundle.test, bundle.scaler_stats);
    return bundle;
}

TabularDataset encode_full(const RawTable& raw, const DatasetSchema& schema) {
    if (raw.rows.empty()) throw std::invalid_argument("cannot encode an empty table");
    const Encoder encoder(raw, schema);
    std::vector<std::size_t> rows(raw.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    auto ds = encoder.encode(raw, schema, rows);
    apply_scaler(ds, encoder.fit_scaler(ds, schema));
    return ds;
}

// ---------------------------------------------------------------------------
// Partitioning

void PartitionSpec::validate() const {
    if (num_clients < 2) throw std::invalid_argument("partition needs at least 2 clients");
    if (mode == PartitionMode::kDirichlet && !(alpha > 0.0 && std::isfinite(alpha))) {
        throw std::invalid_argument("dirichlet alpha must be a positive finite number");
    }
}

std::vector<double> dirichlet_draw(double alpha, std::size_t k, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(k);
    double total = 0.0;
    for (auto& v : p) {
        v = gamma(rng);
        total += v;
    }
    if (!(total > 0.0)) {
        // Every gamma variate underflowed (tiny alpha): the limit is a vertex of the simplex.
        std::fill(p.begin(), p.end(), 0.0);
        p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
        return p;
    }
    for (auto& v : p) v /= total;
    return p;
}

std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> proportions) {
    const double sum = std::accumulate(proportions.begin(), proportions.end(), 0.0);
    if (proportions.empty() || !(sum > 0.0)) throw std::invalid_argument("proportions must have a positive sum");
    std::vector<std::size_t> sizes(proportions.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < proportions.size(); ++k) {
        const double exact = static_cast<double>(total) * proportions[k] / sum;
        sizes[k] = static_cast<std::size_t>(std::floor(exact));
        assigned += sizes[k];
        remainders.emplace_back(exact - static_cast<double>(sizes[k]), k);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total; i = (i + 1) % remainders.size(), ++assigned) {
        ++sizes[remainders[i].second];
    }
    // Rounding in `exact` can push a floor one past the true value.
    while (assigned > total) {
        auto it = std::max_element(sizes.begin(), sizes.end());
        --*it;
        --assigned;
    }
    return sizes;
}

Partition partition_clients(const TabularDataset& train, const PartitionSpec& spec) {
    spec.validate();
    const std::size_t n = train.size();
    const std::size_t k = spec.num_clients;
    if (n == 0) throw std::invalid_argument("cannot partition an empty training split");
    if (k > n) throw std::invalid_argument("more clients than training rows");

    Partition result;
    auto finish = [&](std::vector<std::vector<std::size_t>> buckets) {
        result.shards.clear();
        for (std::size_t c = 0; c < k; ++c) {
            std::sort(buckets[c].begin(), buckets[c].end());
            ClientShard shard;
            shard.client_id = static_cast<int>(c);
            shard.sample_weights.assign(buckets[c].size(), 1.0);
            shard.indices = std::move(buckets[c]);
            result.shards.push_back(std::move(shard));
        }
    };

    if (spec.mode == PartitionMode::kIid) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed({spec.seed, tag(StreamTag::kPartition)}));
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::vector<std::size_t>> buckets(k);
        std::size_t pos = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t size = n / k + (c < n % k ? 1 : 0);
            buckets[c].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                              order.begin() + static_cast<std::ptrdiff_t>(pos + size));
            pos += size;
        }
        finish(std::move(buckets));
        return result;
    }

    std::array<std::vector<std::size_t>, 4> cells;
    for (std::size_t i = 0; i < n; ++i) cells[cell_index(train.s[i], train.y[i])].push_back(i);

    for (int attempt = 0; attempt <= kMaxPartitionRedraws; ++attempt) {
        Rng rng(derive_seed({spec.seed, tag(StreamTag::kPartition), static_cast<std::uint64_t>(attempt)}));
        std::vector<std::vector<std::size_t>> buckets(k);
        for (std::size_t c = 0; c < 4; ++c) {
            auto rows = cells[c];
            std::shuffle(rows.begin(), rows.end(), rng);
            result.cell_proportions[c] = dirichlet_draw(spec.alpha, k, rng);
            const auto sizes = largest_remainder(rows.size(), result.cell_proportions[c]);
            std::size_t pos = 0;
            for (std::size_t client = 0; client < k; ++client) {
                buckets[client].insert(buckets[client].end(), rows.begin() + static_cast<std::ptrdiff_t>(pos),
                                       rows.begin() + static_cast<std::ptrdiff_t>(pos + sizes[client]));
                pos += sizes[client];
            }
        }
        const bool all_non_empty =
            std::none_of(buckets.begin(), buckets.end(), [](const auto& b) { return b.empty(); });
        if (all_non_empty) {
            result.redraws = attempt;
            finish(std::move(buckets));
            return result;
        }
    }
    throw std::runtime_error("dirichlet partition left a client empty after " +
                             std::to_string(kMaxPartitionRedraws) +
                             " redraws; alpha is too small for this number of clients and rows");
}

// ---------------------------------------------------------------------------

DatasetSummary dataset_summary(const TabularDataset& ds) {
    std::array<std::size_t, 4> counts{};
    for (std::size_t i = 0; i < ds.size(); ++i) ++counts[cell_index(ds.s[i], ds.y[i])];
    const std::size_t group0 = counts[0] + counts[1];
    const std::size_t group1 = counts[2] + counts[3];
    if (group0 == 0 || group1 == 0) throw std::invalid_argument("a sensitive group is absent from the dataset");

    DatasetSummary summary;
    summary.rows = ds.size();
    const double n = static_cast<double>(ds.size());
    for (std::size_t c = 0; c < 4; ++c) summary.proportions[c] = static_cast<double>(counts[c]) / n;
    summary.positive_share = static_cast<double>(counts[1] + counts[3]) / n;
    const double rate0 = static_cast<double>(counts[1]) / static_cast<double>(group0);
    const double rate1 = static_cast<double>(counts[3]) / static_cast<double>(group1);
    summary.sp_star = rate0 / rate1;
    return summary;
}

}  // namespace fairfed
