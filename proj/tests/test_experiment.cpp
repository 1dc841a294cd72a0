#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fairfed/experiment.hpp"
#include "support.hpp"

using namespace fairfed;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("fairfed_unit_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("rounds.csv round trip") {
    std::vector<RoundRecord> recs(3);
    recs[0] = {.run = 0, .round = 1, .test = {.accuracy = 0.1 + 0.2, .f1 = 1.0 / 3.0, .sp = 0.5, .eo = std::nullopt, .eqo = 0.75}};
    recs[1] = {.run = 0, .round = 2, .test = {.accuracy = 0.6, .f1 = 0.0, .sp = 1.0, .eo = 2.0 / 7.0, .eqo = std::nullopt}};
    recs[2] = {.run = 1, .round = 1, .test = {.accuracy = 1e-17, .f1 = 0.123456789012345678}};
    std::stringstream ss;
    write_rounds_csv(recs, ss);
    CHECK(ss.str().rfind(std::string(kRoundsCsvHeader) + "\n", 0) == 0);
    const auto back = read_rounds_csv(ss);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].run == recs[i].run);
        CHECK(back[i].round == recs[i].round);
        CHECK(back[i].test == recs[i].test);
    }
    std::istringstream bad("run,round,acc\n");
    CHECK_THROWS(read_rounds_csv(bad));
}

TEST_CASE("summaries use the final round and sample std") {
    std::vector<RoundRecord> recs;
    const double acc[] = {0.5, 0.7, 0.9};
    for (int r = 0; r < 3; ++r) {
        recs.push_back({.run = r, .round = 1, .test = {.accuracy = 0.0}});
        recs.push_back({.run = r, .round = 2, .test = {.accuracy = acc[r], .sp = r == 1 ? std::nullopt : std::optional<double>(0.4)}});
    }
    const auto s = summarize_runs(recs, 3, 2);
    CHECK(s.at("acc").mean == doctest::Approx(0.7));
    CHECK(s.at("acc").std == doctest::Approx(0.2));
    CHECK(s.at("sp").count == 2);
    CHECK(s.at("sp").mean == doctest::Approx(0.4));
    CHECK_FALSE(s.at("sp").per_run[1].has_value());
    CHECK_THROWS(summarize_runs(recs, 3, 5));
}

TEST_CASE("config parsing") {
    const auto dir = scratch("config");
    nlohmann::json schema = schema_to_json(testing::toy_schema());
    schema["federation"] = {{"clients", 6}, {"clients_per_round", 2}};
    std::ofstream(dir / "toy.json") << schema.dump();
    nlohmann::json j{{"schema", "toy.json"},
                     {"sensitive_attribute", "group"},
                     {"partition", {{"mode", "iid"}}},
                     {"rounds", 4},
                     {"runs", 2},
                     {"algorithm", "fairfate"},
                     {"hyperparameters", {{"beta0", {0.8, 0.9}}, {"lambda0", 0.5}, {"rho", 0.05}, {"max_lambda", {0.8, 1.0}}, {"metric", {"SP", "EO"}}}},
                     {"seed", 3}};
    auto cfg = config_from_json(j, dir);
    CHECK(cfg.num_clients == 6);
    CHECK(cfg.clients_per_round == 2);
    CHECK(cfg.partition_mode == PartitionMode::kIid);
    CHECK(cfg.grid_points().size() == 8);
    CHECK(cfg.default_point().fairfate.beta0 == 0.8);
    CHECK(cfg.default_point().fairfate.max_lambda == 0.8);

    auto wrong = j;
    wrong["sensitive_attribute"] = "race";
    CHECK_THROWS(config_from_json(wrong, dir));
    auto bad_m = j;
    bad_m["clients_per_round"] = 6;
    CHECK_THROWS(config_from_json(bad_m, dir));
    auto bad_algo = j;
    bad_algo["algorithm"] = "fedsgd";
    CHECK_THROWS(config_from_json(bad_algo, dir));
    auto missing = j;
    missing["schema"] = "nope.json";
    CHECK_THROWS(config_from_json(missing, dir));

    const auto labels = cfg.grid_points();
    std::set<std::string> unique;
    for (const auto& p : labels) unique.insert(point_label(p));
    CHECK(unique.size() == labels.size());
}

TEST_CASE("runs are deterministic and independent of thread count") {
    const auto raw = testing::toy_table(240, 1);
    auto cfg = testing::toy_config(5, 3, 6);
    cfg.runs = 3;
    AlgorithmConfig point{.algorithm = Algorithm::kFairFate};
    const auto a = run_experiment(cfg, raw, point, 1);
    const auto b = run_experiment(cfg, raw, point, 4);
    CHECK(a.records == b.records);
    CHECK(a.records.size() == 18);
    CHECK(a.final_params == b.final_params);
    const auto single = run_single(cfg, raw, point, 2);
    CHECK(single.final_params[0] == a.final_params[2]);
    cfg.seed = 8;
    CHECK_FALSE(run_experiment(cfg, raw, point, 2).records == a.records);
}

TEST_CASE("every algorithm runs on toy data") {
    const auto raw = testing::toy_table(240, 2);
    auto cfg = testing::toy_config(4, 2, 4);
    cfg.runs = 1;
    for (auto algo : {Algorithm::kFedAvg, Algorithm::kFedMom, Algorithm::kFedDemon, Algorithm::kFedAvgLR,
                      Algorithm::kFedAvgGR, Algorithm::kFedVal, Algorithm::kFairFate}) {
        AlgorithmConfig p{.algorithm = algo};
        const auto r = run_single(cfg, raw, p, 0);
        CHECK(r.records.size() == 4);
        CHECK(r.final_params[0].all_finite());
    }
}

TEST_CASE("grid selection respects the accuracy slack") {
    auto mk = [](double acc, double sp) {
        GridPoint g;
        g.result.summary.metrics["acc"].mean = acc;
        g.result.summary.metrics["sp"].mean = sp;
        g.result.summary.metrics["sp"].count = 1;
        return g;
    };
    RunSummary base;
    base.metrics["acc"].mean = 0.65;
    std::vector<GridPoint> pts{mk(0.64, 0.8), mk(0.50, 0.99), mk(0.60, 0.9)};
    CHECK(select_grid_point(pts, base, FairnessMetric::kSP) == 2);
    std::vector<GridPoint> none{mk(0.3, 0.9), mk(0.4, 0.5)};
    CHECK(select_grid_point(none, base, FairnessMetric::kSP) == 1);
}

TEST_CASE("results files") {
    const auto raw = testing::toy_table(200, 5);
    auto cfg = testing::toy_config(4, 2, 3);
    const auto point = cfg.default_point();
    const auto res = run_experiment(cfg, raw, point, 2);
    const auto dir = scratch("results");
    write_results(res.records, res.summary, cfg.to_json(), point, dir);
    std::ifstream in(dir / "rounds.csv");
    const auto back = read_rounds_csv(in);
    REQUIRE(back.size() == res.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i].test == res.records[i].test);
    const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(j.at("runs") == 2);
    CHECK(j.at("final_round") == 3);
    CHECK(j.at("metrics").at("acc").at("per_run").size() == 2);
}

TEST_CASE("worker count honours FAIRFED_THREADS") {
    ::setenv("FAIRFED_THREADS", "3", 1);
    CHECK(worker_count() == 3);
    ::setenv("FAIRFED_THREADS", "junk", 1);
    CHECK(worker_count() >= 1);
    ::unsetenv("FAIRFED_THREADS");
    std::vector<int> hits(50, 0);
    parallel_for(50, 4, [&](std::size_t i) { hits[i]++; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS(parallel_for(5, 2, [](std::size_t i) {
        if (i == 3) throw std::runtime_error("boom");
    }));
}
