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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/sim.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

// Application family entry of an experiment: either an archetype generated
// from parameters or a knowledge-base file.
struct AppEntry {
  std::optional<ArchetypeKind> kind;
  ArchetypeParams params;
  std::optional<std::filesystem::path> kb_file;
  std::string size_class;
  int variants = 1;
};

struct ExperimentConfig {
  std::vector<Policy> policies{Policy::Gittins, Policy::FcfsApp};
  std::vector<std::uint64_t> seeds{1};
  GenerateParams generate;
  double intensity = 1.0;
  std::optional<std::filesystem::path> trace;
  bool deadlines = false;
  std::vector<DeadlineFactor> deadline_factors = default_deadline_factors();
  std::vector<AppEntry> apps;
  std::uint64_t graph_seed = 7;
  SimConfig sim;
  std::filesystem::path out_dir = "results";
  // Digest of everything that determines the workload (not the policy).
  std::string workload_id;
};

// Parses a config document; errors name the JSON path of the offending key.
// Relative file paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir = ".");

// Reads a config file (comments allowed) and applies environment overrides:
// PDSIM_A__B=value sets key a.b (value parsed as JSON, else kept as string).
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_env_overrides(nlohmann::json& doc, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> pdsim_environment();

struct Catalog {
  std::map<std::string, PDGraph> graphs;
  AppCatalog classes;
};

Catalog build_catalog(const ExperimentConfig& cfg);

// Seeded workload for one run, with deadlines when configured.
WorkloadSpec build_workload(const ExperimentConfig& cfg, const Catalog& catalog,
                            std::uint64_t seed);

struct CellResult {
  Policy policy = Policy::Gittins;
  std::uint64_t seed = 0;
  Metrics metrics;
  SimResult raw;
};

CellResult run_cell(const ExperimentConfig& cfg, const Catalog& catalog,
                    const WorkloadSpec& workload, Policy policy, std::uint64_t seed);

struct ExperimentSummary {
  nlohmann::json doc;
  std::vector<std::filesystem::path> files;
};

// Runs every (policy, seed) cell and writes per-cell metrics JSON, CDF CSV,
// a wall-clock timing sidecar and optionally the event log, then
// summary.json / summary.csv.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

// Relative improvements of every run in `summaries` against the first one,
// per seed and pooled. Rejects summaries of different workloads or without
// common seeds.
nlohmann::json compare(const std::vector<nlohmann::json>& summaries);
std::string compare_table(const nlohmann::json& report);

// Writes through a temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace pdsim
