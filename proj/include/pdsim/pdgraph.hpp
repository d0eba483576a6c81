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
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pdsim/distribution.hpp"

namespace pdsim {

enum class BackendKind { LlmInference, DockerExec, DnnTool, ExternalTool };

const char* to_string(BackendKind kind);
BackendKind parse_backend_kind(const std::string& name);

// Resource type and configuration of the backend a unit runs on. Only the
// identifiers relevant to `kind` are populated.
struct BackendSpec {
  BackendKind kind = BackendKind::LlmInference;
  std::optional<std::string> model_id;
  std::optional<std::string> lora_id;
  std::optional<std::string> kv_prefix_id;
  std::optional<std::string> image_id;
  std::optional<std::string> tool_id;
  double warmup_time = 0.0;
  // Footprint of the warm content (KV prefix, adapter, image) in bytes.
  double content_bytes = 0.0;

  bool is_llm() const { return kind == BackendKind::LlmInference; }
  // Identifier of the content that has to be warm before the unit runs:
  // the KV prefix or LoRA adapter for LLM units, the image or tool otherwise.
  std::optional<std::string> warm_content() const;
  void validate() const;

  static BackendSpec llm(std::string model, std::optional<std::string> lora = {},
                         std::optional<std::string> kv_prefix = {},
                         double warmup_time = 0.0, double content_bytes = 0.0);
  static BackendSpec docker(std::string image, double warmup_time);
  static BackendSpec dnn(std::string tool, double warmup_time);
  static BackendSpec tool(std::string tool, double warmup_time = 0.0);

  friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

// One execution of a unit in one profiling trial. `step` is the position of
// the visit along the trial's path and joins a record with its upstream visit.
struct UnitRecord {
  std::int64_t trial_id = 0;
  int step = 0;
  double input_len = 0.0;
  double output_len = 0.0;
  int parallelism = 1;
  double duration = 0.0;
  std::optional<std::string> next_unit;

  friend bool operator==(const UnitRecord&, const UnitRecord&) = default;
};

// Which cross-unit demand correlations are strong enough to condition on.
struct CorrelationMask {
  bool input_upstream_input = false;    // I depends on upstream I
  bool input_upstream_output = false;   // I depends on upstream O
  bool output_upstream_output = false;  // O depends on upstream O
  bool output_input = false;            // O depends on this unit's I
  bool parallelism_upstream = false;    // P depends on upstream P

  bool any() const {
    return input_upstream_input || input_upstream_output ||
           output_upstream_output || output_input || parallelism_upstream;
  }
  friend bool operator==(const CorrelationMask&,
                         const CorrelationMask&) = default;
};

struct FunctionalUnit {
  FunctionalUnit(std::string id, BackendSpec spec,
                 std::size_t capacity = EmpiricalDistribution::kDefaultCapacity,
                 std::size_t bucket_count =
                     EmpiricalDistribution::kDefaultBucketCount);

  std::string unit_id;
  BackendSpec backend;
  EmpiricalDistribution input_dist;
  EmpiricalDistribution output_dist;
  EmpiricalDistribution parallelism_dist;
  EmpiricalDistribution duration_dist;
  std::deque<UnitRecord> records;
  std::size_t record_capacity;
  std::map<std::string, double> successors;
  CorrelationMask masks;

  bool is_llm() const { return backend.is_llm(); }
  double termination_probability() const;
  // Appends a record and its samples, evicting FIFO at capacity.
  void append(const UnitRecord& record);
};

struct PDGraph {
  std::string app_id;
  std::string entry_unit;
  std::map<std::string, FunctionalUnit> units;
  std::size_t capacity = EmpiricalDistribution::kDefaultCapacity;
  std::size_t bucket_count = EmpiricalDistribution::kDefaultBucketCount;

  FunctionalUnit& add_unit(const std::string& id, BackendSpec spec);
  const FunctionalUnit& unit(const std::string& id) const;
  FunctionalUnit& unit(const std::string& id);
  bool contains(const std::string& id) const { return units.count(id) > 0; }
  // Units whose successor map names `id`.
  std::vector<std::string> predecessors(const std::string& id) const;
  // Throws Error describing the first violated structural invariant.
  void validate() const;
};

// A profiling trial is the ordered path of unit visits it took.
using Trial = std::vector<std::pair<std::string, UnitRecord>>;

// Appends one trial to the knowledge base. The graph is left unchanged when
// the trial is rejected.
void record_trial(PDGraph& graph, const Trial& trial);

// Empirical branch frequencies over all records of the unit; the residual
// mass is the probability of terminating.
std::map<std::string, double> branch_probabilities(const FunctionalUnit& unit);

struct RateProfile {
  double prefill_rate = 10000.0;  // tokens/s
  double decode_rate = 50.0;      // tokens/s per request
};

double service_time(double input_len, double output_len, const RateProfile& env);

}  // namespace pdsim
