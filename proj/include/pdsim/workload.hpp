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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pdsim/pdgraph.hpp"

namespace pdsim {

struct Arrival {
  double time = 0.0;
  std::string app_id;
  std::string tenant_id;
  std::string size_class;
  std::optional<double> deadline;
  std::string deadline_class;

  friend bool operator==(const Arrival&, const Arrival&) = default;
};

struct DeadlineFactor {
  double factor = 1.0;
  double weight = 1.0;
  std::string label;

  friend bool operator==(const DeadlineFactor&, const DeadlineFactor&) = default;
};

// Tight / modest / loose deadline scaling with equal weights.
std::vector<DeadlineFactor> default_deadline_factors();

struct WorkloadSpec {
  std::vector<Arrival> arrivals;
  std::map<std::string, double> mix;
  double window = 0.0;
  std::vector<DeadlineFactor> deadline_factors;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const WorkloadSpec&, const WorkloadSpec&) = default;
};

// Size class -> application ids available in that class.
using AppCatalog = std::map<std::string, std::vector<std::string>>;

// Small / medium / large application mix.
std::map<std::string, double> default_mix();

struct BurstProfile {
  enum class Kind { Uniform, Bursty };
  Kind kind = Kind::Bursty;
  // Two-state modulated Poisson process; sojourn means are fractions of the
  // window and the on-state rate is `on_rate_ratio` times the off-state rate.
  double on_rate_ratio = 8.0;
  double mean_on = 0.05;
  double mean_off = 0.15;
};

struct GenerateParams {
  std::map<std::string, double> mix = default_mix();
  std::size_t n_apps = 300;
  double window = 900.0;
  BurstProfile burst;
  std::uint64_t seed = 1;
  std::size_t tenants = 8;
};

WorkloadSpec generate(const GenerateParams& params, const AppCatalog& catalog);

// deadline = arrival + factor x standalone time, factor drawn by weight.
void assign_deadlines(WorkloadSpec& spec, std::span<const double> standalone,
                      std::span<const DeadlineFactor> factors, std::uint64_t seed);

// Line-delimited JSON records {"t": seconds, "class"?: str, "tenant"?: str}.
// Records without a class are assigned one by `mix`.
WorkloadSpec ingest_trace(const std::filesystem::path& path,
                          const std::map<std::string, double>& mix,
                          const AppCatalog& catalog, std::uint64_t seed);

nlohmann::json to_json(const WorkloadSpec& spec);
WorkloadSpec workload_from_json(const nlohmann::json& doc);

enum class ArchetypeKind { FanoutReduce, VerifyChain, ReactLoop, PlanExecute, CodeCheck };

const char* to_string(ArchetypeKind kind);
ArchetypeKind parse_archetype(const std::string& name);
// Size class each archetype family falls in at default parameters.
std::string default_size_class(ArchetypeKind kind);

struct ArchetypeParams {
  std::string app_id;  // defaults to the archetype name
  int trials = 1000;
  double length_scale = 1.0;
  double duration_scale = 1.0;
  double loop_back = -1.0;  // < 0 selects the archetype's default
  int max_iterations = 0;   // passes through a loop body; 0 = unbounded
  int fan_out = 8;
  double copy_offset = 120.0;
  std::string model = "llama-7b";
  // Per-unit KV prefixes of `kv_bytes` bytes; none when kv_bytes == 0.
  double kv_bytes = 0.0;
  double kv_warmup = 2.0;
  std::optional<std::string> lora_id;
  double lora_bytes = 0.0;
  double lora_warmup = 1.5;
  double docker_warmup = 20.0;
  double dnn_warmup = 15.0;
  double correlation_threshold = 0.5;
};

// PDGraph of the given family populated with synthetic profiling trials and
// correlation masks.
PDGraph archetype(ArchetypeKind kind, const ArchetypeParams& params,
                  std::uint64_t seed);

}  // namespace pdsim
