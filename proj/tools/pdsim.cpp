/* Copyright 2026 The pdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pdsim/experiment.hpp"

namespace {

int run_command(const std::string& config, const std::vector<std::string>& policies,
                const std::vector<std::uint64_t>& seeds, const std::string& out) {
  auto cfg = pdsim::load_config(config);
  if (!policies.empty()) {
    cfg.policies.clear();
    for (const auto& p : policies) cfg.policies.push_back(pdsim::parse_policy(p));
  }
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!out.empty()) cfg.out_dir = out;
  auto summary = pdsim::run_experiment(cfg);
  for (const auto& run : summary.doc.at("runs")) {
    const auto& p = run.at("pooled");
    std::cout << run.at("policy").get<std::string>()
              << ": mean_act=" << p.at("mean_act").get<double>()
              << " p95=" << p.at("p95").get<double>();
    if (!p.at("dsr_overall").is_null()) {
      std::cout << " dsr=" << p.at("dsr_overall").get<double>();
    }
    std::cout << " cache_hit_ratio=" << p.at("cache_hit_ratio").get<double>() << "\n";
  }
  std::cout << "wrote " << summary.files.size() << " files to " << cfg.out_dir.string()
            << "\n";
  return 0;
}

int compare_command(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<nlohmann::json> docs;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw pdsim::Error("cannot open summary " + p);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      docs.push_back(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::exception& e) {
      throw pdsim::Error("summary " + p + ": " + e.what());
    }
  }
  auto report = pdsim::compare(docs);
  std::filesystem::create_directories(out);
  pdsim::write_atomic(std::filesystem::path(out) / "compare.json", report.dump(2) + "\n");
  std::cout << pdsim::compare_table(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdsim: simulator for probabilistic-demand LLM application scheduling"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a policy sweep from a config file");
  std::string config, out;
  std::vector<std::string> policies;
  std::vector<std::uint64_t> seeds;
  run->add_option("--config", config, "experiment config (JSON, comments allowed)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--policy", policies, "override the policy list");
  run->add_option("--seed", seeds, "override the seed list");
  run->add_option("--out", out, "override the output directory");

  auto* cmp = app.add_subcommand("compare", "compare experiment summaries");
  std::string cmp_out = "compare";
  std::vector<std::string> summaries;
  cmp->add_option("--out", cmp_out, "output directory");
  cmp->add_option("summaries", summaries, "summary.json files")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return run_command(config, policies, seeds, out);
    return compare_command(summaries, cmp_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
