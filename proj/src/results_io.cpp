#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fairfed/csv.hpp"
#include "fairfed/experiment.hpp"

namespace fairfed {

namespace {

// Shortest form that parses back to the same double.
std::string format_double(double v) {
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

std::optional<double> parse_optional(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::runtime_error("rounds.csv: bad number '" + s + "'");
    return v;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

void write_rounds_csv(const std::vector<RoundRecord>& records, std::ostream& out) {
    out << kRoundsCsvHeader << '\n';
    for (const auto& r : records) {
        out << r.run << ',' << r.round << ',' << format_double(r.test.accuracy) << ',' << format_double(r.test.f1)
            << ',' << format_optional(r.test.sp) << ',' << format_optional(r.test.eo) << ','
            << format_optional(r.test.eqo) << '\n';
    }
}

std::vector<RoundRecord> read_rounds_csv(std::istream& in) {
    std::vector<std::string> fields;
    if (!csv::read_record(in, fields)) throw std::runtime_error("rounds.csv: missing header");
    std::string header;
    for (std::size_t i = 0; i < fields.size(); ++i) header += (i ? "," : "") + fields[i];
    if (header != kRoundsCsvHeader) throw std::runtime_error("rounds.csv: unexpected header '" + header + "'");

    std::vector<RoundRecord> records;
    while (csv::read_record(in, fields)) {
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != 7) throw std::runtime_error("rounds.csv: expected 7 columns");
        RoundRecord r;
        r.run = std::stoi(fields[0]);
        r.round = std::stoi(fields[1]);
        r.test.accuracy = parse_optional(fields[2]).value_or(0.0);
        r.test.f1 = parse_optional(fields[3]).value_or(0.0);
        r.test.sp = parse_optional(fields[4]);
        r.test.eo = parse_optional(fields[5]);
        r.test.eqo = parse_optional(fields[6]);
        records.push_back(r);
    }
    return records;
}

nlohmann::json summary_to_json(const RunSummary& summary, const nlohmann::json& config,
                               const std::optional<AlgorithmConfig>& point) {
    nlohmann::json j;
    j["config"] = config;
    if (point) j["point"] = point_to_json(*point);
    j["runs"] = summary.runs;
    j["final_round"] = summary.final_round;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& key : metric_keys()) {
        const auto& m = summary.at(key);
        nlohmann::json per_run = nlohmann::json::array();
        for (const auto& v : m.per_run) per_run.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        metrics[key] = {{"mean", m.mean}, {"std", m.std}, {"count", m.count}, {"per_run", per_run}};
    }
    j["metrics"] = metrics;
    return j;
}

void write_results(const std::vector<RoundRecord>& records, const RunSummary& summary, const nlohmann::json& config,
                   const std::optional<AlgorithmConfig>& point, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream csv_out(out_dir / "rounds.csv", std::ios::binary);
        if (!csv_out) throw std::runtime_error("cannot write " + (out_dir / "rounds.csv").string());
        write_rounds_csv(records, csv_out);
        if (!csv_out) throw std::runtime_error("failed writing " + (out_dir / "rounds.csv").string());
    }
    write_json(summary_to_json(summary, config, point), out_dir / "summary.json");
}

void write_grid_results(const GridResult& grid, const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    const auto config = cfg.to_json();
    nlohmann::json index;
    index["config"] = config;
    index["selection"] = {{"metric", to_string(grid.selection_metric)},
                          {"accuracy_slack", kSelectionAccuracySlack},
                          {"baseline_accuracy", grid.baseline.summary.at("acc").mean}};
    index["points"] = nlohmann::json::array();
    for (const auto& p : grid.points) {
        write_results(p.result.records, p.result.summary, config, p.config, out_dir / "points" / p.label);
        nlohmann::json entry = point_to_json(p.config);
        for (const auto& key : metric_keys()) {
            entry[key] = {{"mean", p.result.summary.at(key).mean}, {"std", p.result.summary.at(key).std}};
        }
        index["points"].push_back(entry);
    }
    AlgorithmConfig fedavg;
    write_results(grid.baseline.records, grid.baseline.summary, config, fedavg, out_dir / "baseline_fedavg");
    index["selected"] = grid.points.at(grid.selected).label;
    write_json(index, out_dir / "grid.json");
}

}  // namespace fairfed
