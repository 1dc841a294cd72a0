#include "fairfed/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fairfed/rng.hpp"

namespace fairfed {

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
    schema.validate();
    if (num_clients < 2) throw std::invalid_argument("num_clients must be >= 2");
    if (clients_per_round < 1 || clients_per_round >= num_clients) {
        throw std::invalid_argument("clients_per_round must satisfy 1 <= m < num_clients");
    }
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (runs < 1) throw std::invalid_argument("runs must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
    if (partition_mode == PartitionMode::kDirichlet && !(alpha > 0.0)) {
        throw std::invalid_argument("alpha must be > 0");
    }
    local.validate();
    auto check = [](const std::vector<double>& v, const char* name, bool allow_zero) {
        if (v.empty()) throw std::invalid_argument(std::string("hyperparameter list '") + name + "' is empty");
        for (double x : v) {
            if (!(allow_zero ? x >= 0.0 : x > 0.0)) {
                throw std::invalid_argument(std::string("hyperparameter '") + name + "' out of range");
            }
        }
    };
    check(grid.beta, "beta", true);
    check(grid.beta0, "beta0", true);
    check(grid.lambda0, "lambda0", false);
    check(grid.rho, "rho", true);
    check(grid.max_lambda, "max_lambda", true);
    check(grid.fedval_epsilon, "fedval_epsilon", false);
    if (grid.metric.empty()) throw std::invalid_argument("hyperparameter list 'metric' is empty");
    for (const auto& p : grid_points()) {
        if (p.algorithm == Algorithm::kFairFate) p.fairfate.validate();
        if (p.beta >= 1.0) throw std::invalid_argument("beta must be < 1");
    }
}

namespace {

std::vector<double> number_list(const nlohmann::json& j) {
    if (j.is_array()) return j.get<std::vector<double>>();
    return {j.get<double>()};
}

std::vector<FairnessMetric> metric_list(const nlohmann::json& j) {
    std::vector<FairnessMetric> out;
    if (j.is_array()) {
        for (const auto& m : j) out.push_back(parse_metric(m.get<std::string>()));
    } else {
        out.push_back(parse_metric(j.get<std::string>()));
    }
    return out;
}

std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    try {
        cfg.schema_path = j.at("schema").get<std::string>();
        const auto schema_file = cfg.schema_path.is_absolute() ? cfg.schema_path : base_dir / cfg.schema_path;
        cfg.schema = load_schema(schema_file);
        cfg.dataset = j.value("dataset", cfg.schema.name);
        if (j.contains("sensitive_attribute")) {
            const auto attr = j.at("sensitive_attribute").get<std::string>();
            if (attr != cfg.schema.sensitive_column) {
                throw std::invalid_argument("sensitive_attribute '" + attr + "' does not match the schema's column '" +
                                            cfg.schema.sensitive_column + "'");
            }
        }
        if (j.contains("partition")) {
            const auto& p = j.at("partition");
            const auto mode = p.value("mode", std::string("dirichlet"));
            if (mode == "dirichlet") {
                cfg.partition_mode = PartitionMode::kDirichlet;
                cfg.alpha = p.at("alpha").get<double>();
            } else if (mode == "iid") {
                cfg.partition_mode = PartitionMode::kIid;
            } else {
                throw std::invalid_argument("unknown partition mode '" + mode + "'");
            }
        }
        cfg.num_clients = j.value("num_clients", cfg.schema.default_clients ? cfg.schema.default_clients : 10);
        cfg.clients_per_round = j.value(
            "clients_per_round", cfg.schema.default_clients_per_round ? cfg.schema.default_clients_per_round : 3);
        cfg.rounds = j.value("rounds", 100);
        cfg.runs = j.value("runs", 10);
        if (j.contains("local")) {
            const auto& l = j.at("local");
            cfg.local.epochs = l.value("epochs", cfg.local.epochs);
            cfg.local.batch_size = l.value("batch_size", cfg.local.batch_size);
            cfg.local.learning_rate = l.value("learning_rate", cfg.local.learning_rate);
        }
        cfg.hidden_dim = j.value("hidden_dim", std::size_t{10});
        cfg.algorithm = parse_algorithm(j.value("algorithm", std::string("fedavg")));
        if (j.contains("hyperparameters")) {
            const auto& h = j.at("hyperparameters");
            if (h.contains("beta")) cfg.grid.beta = number_list(h.at("beta"));
            if (h.contains("beta0")) cfg.grid.beta0 = number_list(h.at("beta0"));
            if (h.contains("lambda0")) cfg.grid.lambda0 = number_list(h.at("lambda0"));
            if (h.contains("rho")) cfg.grid.rho = number_list(h.at("rho"));
            if (h.contains("max_lambda")) cfg.grid.max_lambda = number_list(h.at("max_lambda"));
            if (h.contains("metric")) cfg.grid.metric = metric_list(h.at("metric"));
            if (h.contains("fedval_epsilon")) cfg.grid.fedval_epsilon = number_list(h.at("fedval_epsilon"));
        }
        if (j.contains("selection_metric")) cfg.selection_metric = parse_metric(j.at("selection_metric"));
        cfg.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("invalid experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("invalid config file " + path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["dataset"] = dataset;
    j["schema"] = schema_path.string();
    j["sensitive_attribute"] = schema.sensitive_column;
    if (partition_mode == PartitionMode::kIid) {
        j["partition"] = {{"mode", "iid"}};
    } else {
        j["partition"] = {{"mode", "dirichlet"}, {"alpha", alpha}};
    }
    j["num_clients"] = num_clients;
    j["clients_per_round"] = clients_per_round;
    j["rounds"] = rounds;
    j["runs"] = runs;
    j["local"] = {{"epochs", local.epochs}, {"batch_size", local.batch_size}, {"learning_rate", local.learning_rate}};
    j["hidden_dim"] = hidden_dim;
    j["algorithm"] = to_string(algorithm);
    std::vector<std::string> metrics;
    for (auto m : grid.metric) metrics.push_back(to_string(m));
    j["hyperparameters"] = {{"beta", grid.beta},           {"beta0", grid.beta0},
                            {"lambda0", grid.lambda0},     {"rho", grid.rho},
                            {"max_lambda", grid.max_lambda}, {"metric", metrics},
                            {"fedval_epsilon", grid.fedval_epsilon}};
    j["selection_metric"] = to_string(selection_metric);
    j["seed"] = seed;
    return j;
}

std::vector<AlgorithmConfig> ExperimentConfig::grid_points() const {
    std::vector<AlgorithmConfig> points;
    AlgorithmConfig base;
    base.algorithm = algorithm;
    switch (algorithm) {
        case Algorithm::kFedMom:
        case Algorithm::kFedDemon:
            for (double b : grid.beta) {
                AlgorithmConfig p = base;
                p.beta = b;
                points.push_back(p);
            }
            break;
        case Algorithm::kFedVal:
            for (auto m : grid.metric) {
                for (double eps : grid.fedval_epsilon) {
                    AlgorithmConfig p = base;
                    p.fairfate.metric = m;
                    p.fedval_epsilon = eps;
                    points.push_back(p);
                }
            }
            break;
        case Algorithm::kFairFate:
            for (auto m : grid.metric) {
                for (double b0 : grid.beta0) {
                    for (double l0 : grid.lambda0) {
                        for (double r : grid.rho) {
                            for (double mx : grid.max_lambda) {
                                AlgorithmConfig p = base;
                                p.fairfate = FairFateConfig{b0, l0, r, mx, m};
                                points.push_back(p);
                            }
                        }
                    }
                }
            }
            break;
        default:
            points.push_back(base);
    }
    return points;
}

AlgorithmConfig ExperimentConfig::default_point() const { return grid_points().front(); }

std::string point_label(const AlgorithmConfig& p) {
    std::string label = to_string(p.algorithm);
    switch (p.algorithm) {
        case Algorithm::kFedMom:
        case Algorithm::kFedDemon:
            label += "_beta" + format_number(p.beta);
            break;
        case Algorithm::kFedVal:
            label += "_" + to_string(p.fairfate.metric) + "_eps" + format_number(p.fedval_epsilon);
            break;
        case Algorithm::kFairFate:
            label += "_" + to_string(p.fairfate.metric) + "_b" + format_number(p.fairfate.beta0) + "_l" +
                     format_number(p.fairfate.lambda0) + "_r" + format_number(p.fairfate.rho) + "_max" +
                     format_number(p.fairfate.max_lambda);
            break;
        default:
            break;
    }
    return label;
}

nlohmann::json point_to_json(const AlgorithmConfig& p) {
    nlohmann::json j{{"algorithm", to_string(p.algorithm)}, {"label", point_label(p)}};
    switch (p.algorithm) {
        case Algorithm::kFedMom:
        case Algorithm::kFedDemon:
            j["beta"] = p.beta;
            break;
        case Algorithm::kFedVal:
            j["metric"] = to_string(p.fairfate.metric);
            j["fedval_epsilon"] = p.fedval_epsilon;
            break;
        case Algorithm::kFairFate:
            j["metric"] = to_string(p.fairfate.metric);
            j["beta0"] = p.fairfate.beta0;
            j["lambda0"] = p.fairfate.lambda0;
            j["rho"] = p.fairfate.rho;
            j["max_lambda"] = p.fairfate.max_lambda;
            break;
        default:
            break;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Execution

RawTable load_dataset(const ExperimentConfig& cfg) {
    if (cfg.schema.data_path.empty()) throw std::runtime_error("schema '" + cfg.schema.name + "' names no data file");
    try {
        return ingest_csv(cfg.schema.data_path, cfg.schema);
    } catch (const std::exception& e) {
        throw std::runtime_error("dataset '" + cfg.dataset + "': " + e.what());
    }
}

ExperimentResult run_single(const ExperimentConfig& cfg, const RawTable& raw, const AlgorithmConfig& point, int run) {
    const std::uint64_t run_seed = derive_seed({cfg.seed, static_cast<std::uint64_t>(run)});
    const SplitBundle bundle = preprocess_and_split(raw, cfg.schema, derive_seed({run_seed, tag(StreamTag::kSplit)}));
    const TabularDataset& train = bundle.train;

    PartitionSpec spec;
    spec.mode = cfg.partition_mode;
    spec.alpha = cfg.alpha;
    spec.num_clients = cfg.num_clients;
    spec.seed = derive_seed({run_seed, tag(StreamTag::kPartition)});
    std::vector<ClientShard> shards = partition_clients(train, spec).shards;
    if (point.algorithm == Algorithm::kFedAvgLR) {
        for (auto& shard : shards) shard.sample_weights = local_reweigh(shard, train);
    }

    const ModelShape shape{train.dim(), cfg.hidden_dim};
    ServerState state =
        ServerState::initial(init_params(shape, derive_seed({run_seed, tag(StreamTag::kInit)})), cfg.rounds);

    ExperimentResult result;
    result.records.reserve(static_cast<std::size_t>(cfg.rounds));
    for (int t = 1; t <= cfg.rounds; ++t) {
        const auto round = static_cast<std::uint64_t>(t);
        Rng select_rng(derive_seed({run_seed, round, tag(StreamTag::kSelect)}));
        const auto chosen = select_client_subset(cfg.num_clients, cfg.clients_per_round, select_rng);

        std::vector<ClientShard> participants;
        participants.reserve(chosen.size());
        for (int k : chosen) participants.push_back(shards[static_cast<std::size_t>(k)]);
        if (point.algorithm == Algorithm::kFedAvgGR) {
            auto weights = global_reweigh(participants, train);
            for (std::size_t i = 0; i < participants.size(); ++i) participants[i].sample_weights = std::move(weights[i]);
        }

        std::vector<ClientUpdate> updates;
        updates.reserve(participants.size());
        for (const auto& shard : participants) {
            const auto client_seed = derive_seed(
                {run_seed, round, static_cast<std::uint64_t>(shard.client_id), tag(StreamTag::kClient)});
            updates.push_back(client_local_update(state.theta, shard, train, cfg.local, client_seed));
        }
        state = aggregate(point, state, updates, bundle.validation);

        RoundRecord rec;
        rec.run = run;
        rec.round = t;
        rec.test = evaluate_model(state.theta, bundle.test);
        rec.validation = evaluate_model(state.theta, bundle.validation);
        result.records.push_back(rec);
    }
    result.final_params.push_back(state.theta);
    return result;
}

std::size_t worker_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FAIRFED_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) n = static_cast<std::size_t>(v);
    }
    return n;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& task) {
    if (threads == 0) threads = worker_count();
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> workers;
        workers.reserve(threads);
        for (std::size_t w = 0; w < threads; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    try {
                        task(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                        next.store(n);
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

namespace {

ExperimentResult merge_runs(std::vector<ExperimentResult>& per_run, int final_round) {
    ExperimentResult merged;
    for (auto& r : per_run) {
        merged.records.insert(merged.records.end(), r.records.begin(), r.records.end());
        merged.final_params.insert(merged.final_params.end(), r.final_params.begin(), r.final_params.end());
    }
    merged.summary = summarize_runs(merged.records, static_cast<int>(per_run.size()), final_round);
    return merged;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RawTable& raw, const AlgorithmConfig& point,
                                std::size_t threads) {
    cfg.validate();
    std::vector<ExperimentResult> per_run(static_cast<std::size_t>(cfg.runs));
    parallel_for(per_run.size(), threads,
                 [&](std::size_t r) { per_run[r] = run_single(cfg, raw, point, static_cast<int>(r)); });
    return merge_runs(per_run, cfg.rounds);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const RawTable raw = load_dataset(cfg);
    return run_experiment(cfg, raw, cfg.default_point());
}

const MetricSummary& RunSummary::at(const std::string& key) const {
    const auto it = metrics.find(key);
    if (it == metrics.end()) throw std::out_of_range("summary has no metric '" + key + "'");
    return it->second;
}

std::string report_key(FairnessMetric m) {
    std::string key = to_string(m);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    return key;
}

std::optional<double> report_value(const FairnessReport& r, const std::string& key) {
    if (key == "acc") return r.accuracy;
    if (key == "f1") return r.f1;
    if (key == "sp") return r.sp;
    if (key == "eo") return r.eo;
    if (key == "eqo") return r.eqo;
    throw std::invalid_argument("unknown metric key '" + key + "'");
}

RunSummary summarize_runs(const std::vector<RoundRecord>& records, int runs, int final_round) {
    if (runs < 1) throw std::invalid_argument("summarize_runs: need at least one run");
    std::vector<const RoundRecord*> finals(static_cast<std::size_t>(runs), nullptr);
    for (const auto& rec : records) {
        if (rec.round == final_round && rec.run >= 0 && rec.run < runs) finals[static_cast<std::size_t>(rec.run)] = &rec;
    }
    for (int r = 0; r < runs; ++r) {
        if (!finals[static_cast<std::size_t>(r)]) {
            throw std::invalid_argument("run " + std::to_string(r) + " has no record for final round " +
                                        std::to_string(final_round));
        }
    }

    RunSummary summary;
    summary.runs = runs;
    summary.final_round = final_round;
    for (const auto& key : metric_keys()) {
        MetricSummary ms;
        std::vector<double> present;
        for (const auto* rec : finals) {
            const auto v = report_value(rec->test, key);
            ms.per_run.push_back(v);
            if (v) present.push_back(*v);
        }
        ms.count = present.size();
        if (!present.empty()) {
            double sum = 0.0;
            for (double v : present) sum += v;
            ms.mean = sum / static_cast<double>(present.size());
            if (present.size() > 1) {
                double ss = 0.0;
                for (double v : present) ss += (v - ms.mean) * (v - ms.mean);
                ms.std = std::sqrt(ss / static_cast<double>(present.size() - 1));
            }
        }
        summary.metrics.emplace(key, std::move(ms));
    }
    return summary;
}

std::size_t select_grid_point(const std::vector<GridPoint>& points, const RunSummary& baseline, FairnessMetric metric,
                              double slack) {
    if (points.empty()) throw std::invalid_argument("select_grid_point: no grid points");
    const std::string key = report_key(metric);
    const double floor = baseline.at("acc").mean - slack;

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& s = points[i].result.summary;
        if (s.at("acc").mean < floor || s.at(key).count == 0) continue;
        if (!best || s.at(key).mean > points[*best].result.summary.at(key).mean) best = i;
    }
    if (best) return *best;
    std::size_t most_accurate = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (points[i].result.summary.at("acc").mean > points[most_accurate].result.summary.at("acc").mean) {
            most_accurate = i;
        }
    }
    return most_accurate;
}

GridResult run_grid(const ExperimentConfig& cfg, const RawTable& raw, std::size_t threads) {
    cfg.validate();
    const auto configs = cfg.grid_points();
    AlgorithmConfig fedavg;
    fedavg.algorithm = Algorithm::kFedAvg;

    // Task space: every (point, run) pair plus the FedAvg baseline runs at the end.
    const std::size_t runs = static_cast<std::size_t>(cfg.runs);
    const std::size_t total_points = configs.size() + 1;
    std::vector<std::vector<ExperimentResult>> slots(total_points, std::vector<ExperimentResult>(runs));
    parallel_for(total_points * runs, threads, [&](std::size_t task) {
        const std::size_t p = task / runs;
        const std::size_t r = task % runs;
        const AlgorithmConfig& point = p < configs.size() ? configs[p] : fedavg;
        slots[p][r] = run_single(cfg, raw, point, static_cast<int>(r));
    });

    GridResult grid;
    for (std::size_t p = 0; p < configs.size(); ++p) {
        grid.points.push_back({configs[p], point_label(configs[p]), merge_runs(slots[p], cfg.rounds)});
    }
    grid.baseline = merge_runs(slots.back(), cfg.rounds);
    grid.selection_metric = cfg.default_point().metric().value_or(cfg.selection_metric);
    grid.selected = select_grid_point(grid.points, grid.baseline.summary, grid.selection_metric);
    return grid;
}

}  // namespace fairfed
