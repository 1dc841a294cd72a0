#include "fairfed/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>

#include "CLI11.hpp"
#include "fairfed/csv.hpp"
#include "fairfed/data_pipeline.hpp"
#include "fairfed/experiment.hpp"
#include "fairfed/wilcoxon.hpp"

namespace fairfed::cli {

namespace {

struct RunArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool grid = false;
    std::optional<double> alpha;
    std::optional<std::size_t> clients;
};

struct PreviewArgs {
    std::string schema;
    double alpha = 0.5;
    bool iid = false;
    std::optional<std::size_t> clients;
    std::uint64_t seed = 0;
    std::string out;
};

struct SummarizeArgs {
    std::string schema;
    std::string data;
};

struct CompareArgs {
    std::string first;
    std::string second;
    std::string metric = "sp";
};

int cmd_run(const RunArgs& a, std::ostream& out) {
    ExperimentConfig cfg = load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.alpha) {
        cfg.partition_mode = PartitionMode::kDirichlet;
        cfg.alpha = *a.alpha;
    }
    if (a.clients) cfg.num_clients = *a.clients;
    cfg.validate();

    const RawTable raw = load_dataset(cfg);
    if (a.grid) {
        const GridResult grid = run_grid(cfg, raw);
        write_grid_results(grid, cfg, a.out);
        const auto& best = grid.points.at(grid.selected);
        out << "grid points: " << grid.points.size() << "\n"
            << "selected: " << best.label << " (" << to_string(grid.selection_metric) << " "
            << best.result.summary.at(report_key(grid.selection_metric)).mean << ", acc "
            << best.result.summary.at("acc").mean << "; fedavg acc " << grid.baseline.summary.at("acc").mean
            << ")\n";
        return 0;
    }
    const auto point = cfg.default_point();
    const ExperimentResult result = run_experiment(cfg, raw, point);
    write_results(result.records, result.summary, cfg.to_json(), point, a.out);
    out << point_label(point) << " after " << cfg.rounds << " rounds, " << cfg.runs << " runs:\n";
    for (const auto& key : metric_keys()) {
        const auto& m = result.summary.at(key);
        out << "  " << std::left << std::setw(4) << key << std::fixed << std::setprecision(3) << m.mean
            << " +- " << m.std << "\n";
    }
    return 0;
}

int cmd_preview(const PreviewArgs& a, std::ostream& out) {
    const DatasetSchema schema = load_schema(a.schema);
    const RawTable raw = ingest_csv(schema.data_path, schema);
    const SplitBundle bundle = preprocess_and_split(raw, schema, derive_seed({a.seed, tag(StreamTag::kSplit)}));

    PartitionSpec spec;
    spec.mode = a.iid ? PartitionMode::kIid : PartitionMode::kDirichlet;
    spec.alpha = a.alpha;
    spec.num_clients = a.clients.value_or(schema.default_clients ? schema.default_clients : 10);
    spec.seed = derive_seed({a.seed, tag(StreamTag::kPartition)});
    const Partition partition = partition_clients(bundle.train, spec);

    std::ofstream file;
    if (!a.out.empty()) {
        file.open(a.out, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + a.out);
    }
    std::ostream& dst = a.out.empty() ? out : file;
    dst << "client,size,n_s0_y0,n_s0_y1,n_s1_y0,n_s1_y1,p_s0_y0,p_s0_y1,p_s1_y0,p_s1_y1\n";
    for (const auto& shard : partition.shards) {
        const auto counts = cell_counts(shard, bundle.train);
        dst << shard.client_id << ',' << shard.size();
        for (auto c : counts) dst << ',' << c;
        for (auto c : counts) {
            dst << ',' << std::setprecision(6) << static_cast<double>(c) / static_cast<double>(shard.size());
        }
        dst << '\n';
    }
    return 0;
}

int cmd_summarize(const SummarizeArgs& a, std::ostream& out) {
    DatasetSchema schema = load_schema(a.schema);
    if (!a.data.empty()) schema.data_path = a.data;
    const RawTable raw = ingest_csv(schema.data_path, schema);
    const DatasetSummary s = dataset_summary(encode_full(raw, schema));

    const std::string& sens = schema.sensitive_column;
    const std::string priv = "privileged (" + sens + "=" + schema.privileged_value + ")";
    const std::string unpriv = "unprivileged";
    out << "dataset: " << (schema.name.empty() ? a.schema : schema.name) << "\n"
        << "rows: " << s.rows << " (dropped " << raw.dropped_filtered << " by filters, " << raw.dropped_missing
        << " with missing values)\n";
    out << std::fixed << std::setprecision(1);
    out << "  " << unpriv << ", negative: " << 100.0 * s.proportions[cell_index(0, 0)] << "%\n"
        << "  " << unpriv << ", positive: " << 100.0 * s.proportions[cell_index(0, 1)] << "%\n"
        << "  " << priv << ", negative: " << 100.0 * s.proportions[cell_index(1, 0)] << "%\n"
        << "  " << priv << ", positive: " << 100.0 * s.proportions[cell_index(1, 1)] << "%\n";
    out << "positive outcome share: " << 100.0 * s.positive_share << "%\n";
    out << std::setprecision(3) << "SP*: " << s.sp_star << "\n";
    return 0;
}

std::vector<double> per_run_values(const std::filesystem::path& path, const std::string& metric) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open summary file " + path.string());
    const auto j = nlohmann::json::parse(in);
    std::vector<double> values;
    for (const auto& v : j.at("metrics").at(metric).at("per_run")) {
        if (v.is_null()) throw std::runtime_error(path.string() + ": metric '" + metric + "' absent in some run");
        values.push_back(v.get<double>());
    }
    return values;
}

int cmd_compare(const CompareArgs& a, std::ostream& out) {
    std::string metric = a.metric;
    std::transform(metric.begin(), metric.end(), metric.begin(), [](unsigned char c) { return std::tolower(c); });
    (void)report_value(FairnessReport{}, metric);  // validates the key
    const auto first = per_run_values(a.first, metric);
    const auto second = per_run_values(a.second, metric);
    const auto result = wilcoxon_signed_rank_greater(first, second);
    out << "metric: " << metric << "\n"
        << "pairs: " << result.n << "\n"
        << "W+: " << result.w_plus << "\n"
        << "p-value (one-sided, first > second, " << (result.exact ? "exact" : "normal approximation")
        << "): " << std::setprecision(6) << result.p_value << "\n"
        << "significant at " << kSignificanceLevel << ": " << (result.significant() ? "yes" : "no") << "\n";
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fairness-aware federated learning simulator", "fairfed"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run an experiment config and write rounds.csv / summary.json");
    run->add_option("--config", run_args.config, "Experiment config file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", run_args.out, "Output directory")->required();
    run->add_option("--seed", run_args.seed, "Master seed (overrides the config)");
    run->add_flag("--grid", run_args.grid, "Run the full hyperparameter grid");
    run->add_option("--alpha", run_args.alpha, "Dirichlet alpha (overrides the config)");
    run->add_option("--clients", run_args.clients, "Number of clients (overrides the config)");

    PreviewArgs preview_args;
    auto* preview = app.add_subcommand("partition-preview", "Per-client (S,Y) cell counts and shares as CSV");
    preview->add_option("schema", preview_args.schema, "Dataset schema file")->required()->check(CLI::ExistingFile);
    preview->add_option("--alpha", preview_args.alpha, "Dirichlet alpha");
    preview->add_flag("--iid", preview_args.iid, "Random equal-size split instead of Dirichlet");
    preview->add_option("--clients", preview_args.clients, "Number of clients");
    preview->add_option("--seed", preview_args.seed, "Seed for the split and partition");
    preview->add_option("--out", preview_args.out, "Write CSV to this file instead of stdout");

    SummarizeArgs summarize_args;
    auto* summarize = app.add_subcommand("summarize", "Group/outcome proportions and SP* of a dataset");
    summarize->add_option("schema", summarize_args.schema, "Dataset schema file")->required()->check(CLI::ExistingFile);
    summarize->add_option("--data", summarize_args.data, "CSV path overriding the schema's data file");

    CompareArgs compare_args;
    auto* compare = app.add_subcommand("compare", "One-sided Wilcoxon signed-rank test between two summaries");
    compare->add_option("first", compare_args.first, "summary.json expected to be larger")
        ->required()
        ->check(CLI::ExistingFile);
    compare->add_option("second", compare_args.second, "summary.json of the reference")
        ->required()
        ->check(CLI::ExistingFile);
    compare->add_option("--metric", compare_args.metric, "acc, f1, sp, eo or eqo");

    std::vector<std::string> storage{"fairfed"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : storage) argv.push_back(s.c_str());

    if (!args.empty() && !args[0].empty() && args[0][0] != '-' && app.get_subcommand_no_throw(args[0]) == nullptr) {
        err << "error: unknown subcommand '" << args[0] << "'\n" << app.help();
        return 2;
    }

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
    }

    try {
        if (*run) return cmd_run(run_args, out);
        if (*preview) return cmd_preview(preview_args, out);
        if (*summarize) return cmd_summarize(summarize_args, out);
        if (*compare) return cmd_compare(compare_args, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace fairfed::cli
