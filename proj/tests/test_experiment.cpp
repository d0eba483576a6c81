#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pdsim/common.hpp"
#include "pdsim/experiment.hpp"

using namespace pdsim;
using nlohmann::json;

namespace {

json small_config(const std::filesystem::path& out) {
  auto doc = json::parse(R"({
    "policies": ["gittins", "fcfs-app"],
    "seeds": [1, 2, 3],
    "workload": {"n_apps": 20, "window": 60, "mix": {"small": 1.0}},
    "apps": [{"archetype": "react-loop", "class": "small", "params": {"trials": 100}}],
    "env": {"engines": [{"slots": 2}]},
    "scheduler": {"mc_samples": 200}
  })");
  doc["output"] = {{"dir", out.string()}};
  return doc;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json summary_of(const std::string& id, std::vector<std::pair<std::string, double>> runs,
                std::vector<std::string> seeds) {
  json out{{"workload_id", id}, {"runs", json::array()}};
  for (const auto& [policy, mean] : runs) {
    json stats{{"mean_act", mean}, {"p50", mean}, {"p95", mean}, {"dsr_overall", nullptr},
               {"cache_hit_ratio", 0.0}};
    json per_seed = json::object();
    for (const auto& s : seeds) per_seed[s] = stats;
    out["runs"].push_back({{"policy", policy}, {"per_seed", per_seed}, {"pooled", stats}});
  }
  return out;
}

}  // namespace

TEST_CASE("experiment writes one file set per cell, byte-identical on rerun") {
  const auto dir = std::filesystem::temp_directory_path() / "pdsim_experiment_test";
  std::filesystem::remove_all(dir);
  auto cfg = parse_config(small_config(dir / "a"));
  auto first = run_experiment(cfg);
  int metrics_files = 0;
  for (const auto& f : first.files) metrics_files += f.string().ends_with(".metrics.json");
  CHECK(metrics_files == 6);
  CHECK(std::filesystem::exists(dir / "a" / "summary.json"));
  CHECK(std::filesystem::exists(dir / "a" / "summary.csv"));
  CHECK(first.doc.at("runs").size() == 2);

  cfg.out_dir = dir / "b";
  run_experiment(cfg);
  for (const auto& f : first.files) {
    if (f.string().ends_with(".timing.json")) continue;
    CHECK(slurp(f) == slurp(dir / "b" / f.filename()));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("config errors name the offending key") {
  auto doc = small_config("out");
  SUBCASE("unknown policy") {
    doc["policies"] = {"gittins", "lottery"};
    CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("$.policies[1]"), Error);
  }
  SUBCASE("unknown key") {
    doc["scheduler"]["bucket_cnt"] = 10;
    CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("$.scheduler.bucket_cnt"),
                         Error);
  }
  SUBCASE("wrong type") {
    doc["env"]["engines"][0]["slots"] = "many";
    CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("$.env.engines[0].slots"),
                         Error);
  }
  SUBCASE("mix weights") {
    doc["workload"]["mix"] = {{"small", 0.5}};
    CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("$.workload.mix"), Error);
  }
  SUBCASE("knob range") {
    doc["prewarm"] = {{"knob", 1.5}};
    CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("$.prewarm.knob"), Error);
  }
  SUBCASE("deadline policies need deadlines") {
    doc["policies"] = {"gittins", "edf"};
    CHECK_THROWS_WITH_AS(parse_config(doc), doctest::Contains("$.policies[1]"), Error);
  }
}

TEST_CASE("environment overrides") {
  json doc = small_config("out");
  apply_env_overrides(doc, {{"PDSIM_SCHEDULER__REFINEMENT", "false"},
                            {"PDSIM_PREWARM__KNOB", "0.3"},
                            {"PDSIM_OUTPUT__DIR", "elsewhere"},
                            {"HOME", "/root"}});
  CHECK(doc["scheduler"]["refinement"] == false);
  CHECK(doc["prewarm"]["knob"] == 0.3);
  CHECK(doc["output"]["dir"] == "elsewhere");
  auto cfg = parse_config(doc);
  CHECK_FALSE(cfg.sim.scheduler.refinement);
  CHECK(cfg.sim.prewarm.knob == 0.3);
  CHECK(cfg.out_dir.filename() == "elsewhere");
  CHECK_THROWS_AS(apply_env_overrides(doc, {{"PDSIM_A____B", "1"}}), Error);
}

TEST_CASE("shipped configs parse") {
  for (const auto& entry : std::filesystem::directory_iterator(PDSIM_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()));
  }
}

TEST_CASE("workload identity ignores the policy list") {
  auto a = small_config("out");
  auto b = a;
  b["policies"] = {"srpt-mean"};
  CHECK(parse_config(a).workload_id == parse_config(b).workload_id);
  b["workload"]["n_apps"] = 21;
  CHECK(parse_config(a).workload_id != parse_config(b).workload_id);
}

TEST_CASE("compare") {
  SUBCASE("means 10 and 4") {
    auto r = compare({summary_of("w", {{"fcfs-app", 10}, {"gittins", 4}}, {"1", "2"})});
    const auto& c = r.at("comparisons").at(0);
    CHECK(c.at("pooled").at("mean_act_reduction").get<double>() == doctest::Approx(0.6));
    CHECK(c.at("per_seed").at("1").at("mean_act_reduction").get<double>() ==
          doctest::Approx(0.6));
    CHECK(compare_table(r).find("60.0%") != std::string::npos);
  }
  SUBCASE("identical runs") {
    auto r = compare({summary_of("w", {{"gittins", 7}}, {"1"}),
                      summary_of("w", {{"gittins", 7}}, {"1"})});
    CHECK(r.at("comparisons").at(0).at("pooled").at("mean_act_reduction") == 0.0);
  }
  SUBCASE("no common seeds") {
    CHECK_THROWS_AS(compare({summary_of("w", {{"a", 1}}, {"1"}),
                             summary_of("w", {{"b", 1}}, {"2"})}),
                    Error);
  }
  SUBCASE("different workloads") {
    CHECK_THROWS_AS(compare({summary_of("w", {{"a", 1}}, {"1"}),
                             summary_of("v", {{"b", 1}}, {"1"})}),
                    Error);
  }
}
