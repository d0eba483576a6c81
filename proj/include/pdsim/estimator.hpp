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
#include <span>
#include <string>
#include <vector>

#include "pdsim/common.hpp"
#include "pdsim/pdgraph.hpp"

namespace pdsim {

// Execution information of a unit that just completed in a live instance.
struct Observation {
  std::string unit_id;
  double input_len = 0.0;
  double output_len = 0.0;
  int parallelism = 1;
  double completion_time = 0.0;
};

// Monte Carlo draws of the total remaining service time of an application.
// `latency` holds the matching critical-path time of each walk (parallel
// requests of a unit counted once).
struct RemainingDemand {
  std::vector<double> samples;
  std::vector<double> latency;
  bool conditioned = false;
  std::size_t capped_walks = 0;

  std::size_t sample_count() const { return samples.size(); }
  double mean() const;
  double max() const;
  double min() const;
};

// Population Pearson coefficient, clamped to [-1, 1]. Throws Error when the
// inputs are mismatched, shorter than 2, or either one is constant.
double pearson(std::span<const double> x, std::span<const double> y);

struct JoinedRecord {
  const UnitRecord* upstream = nullptr;
  const UnitRecord* downstream = nullptr;
};

// Pairs each record of `unit` with the record of `upstream` visited right
// before it in the same trial.
std::vector<JoinedRecord> join_records(const FunctionalUnit& unit,
                                       const FunctionalUnit& upstream);

// Sets every unit's five correlation flags from the records joined with its
// predecessors. Returns warning diagnostics for flags that could not be
// evaluated (too few joined records, constant variables).
std::vector<std::string> build_masks(PDGraph& graph, double threshold = 0.5);

struct ConditionalDemand {
  EmpiricalDistribution input;
  EmpiricalDistribution output;
  EmpiricalDistribution parallelism;
  bool input_conditioned = false;
  bool output_conditioned = false;
  bool parallelism_conditioned = false;
  std::vector<std::string> diagnostics;

  bool conditioned() const {
    return input_conditioned || output_conditioned || parallelism_conditioned;
  }
};

struct FilterOptions {
  std::size_t min_conditional_samples = 5;
};

// Narrows the demand distributions of `unit` to the joined historical tuples
// whose masked upstream variables share a bucket with the observation.
// Variables without an applicable mask, or with fewer than the minimum number
// of matching tuples, keep their unconditioned distribution.
ConditionalDemand conditional_filter(const FunctionalUnit& unit,
                                     const Observation& observed,
                                     const FunctionalUnit& upstream,
                                     const FilterOptions& options = {});

struct CompiledUnit {
  std::string id;
  bool llm = true;
  std::vector<double> input;
  std::vector<double> output;
  std::vector<double> parallelism;
  std::vector<double> duration;
  // Output samples grouped by this unit's input bucket; filled only when
  // the output/input correlation flag is set.
  BucketGrid input_grid;
  std::vector<std::vector<double>> output_given_input;
  std::vector<int> next;
  std::vector<double> next_cumulative;
  CorrelationMask masks;
};

// Flat, read-only snapshot of a PDGraph used by the random-walk kernels.
class CompiledGraph {
 public:
  explicit CompiledGraph(const PDGraph& graph,
                         std::size_t min_conditional_samples = 5);

  int index_of(const std::string& unit_id) const;
  const CompiledUnit& unit(int index) const { return units_[index]; }
  std::size_t size() const { return units_.size(); }
  int entry() const { return entry_; }
  const PDGraph& source() const { return *source_; }
  std::size_t min_conditional_samples() const { return min_conditional_; }

 private:
  const PDGraph* source_;
  std::vector<CompiledUnit> units_;
  int entry_ = 0;
  std::size_t min_conditional_;
};

// Sampling tables for the first unit of a walk after conditioning on an
// observation; overrides the unit's own tables.
struct FirstHop {
  std::vector<double> input;
  std::vector<double> output;
  std::vector<double> parallelism;
  bool output_conditioned = false;
};

FirstHop make_first_hop(const ConditionalDemand& demand);

struct McOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  int max_visits = 64;
  std::size_t min_conditional_samples = 5;
};

// Demand of one unit visit: parallelism x per-request service time for LLM
// units, the drawn duration otherwise.
double sample_unit_demand(const CompiledUnit& unit, const FirstHop* hop,
                          const RateProfile& env, std::size_t min_conditional,
                          SplitMix64& rng);

// Per-request service time of one visit (critical path of the unit).
double sample_unit_latency(const CompiledUnit& unit, const FirstHop* hop,
                           const RateProfile& env, std::size_t min_conditional,
                           SplitMix64& rng);

RemainingDemand monte_carlo_remaining_demand(
    const PDGraph& graph, const std::string& current_unit,
    std::span<const Observation> observations, const RateProfile& env,
    const McOptions& options);

RemainingDemand monte_carlo_remaining_demand(const CompiledGraph& graph,
                                             int current_unit,
                                             const FirstHop* first_hop,
                                             const RateProfile& env,
                                             const McOptions& options);

// Exact expected remaining demand by enumerating every path and every
// combination of demand values. Test oracle: requires an acyclic graph,
// at most 16 distinct values per distribution and no correlation flags.
double exact_remaining_demand(const PDGraph& graph,
                              const std::string& current_unit,
                              const RateProfile& env);

namespace kernels {

struct WalkJob {
  const CompiledGraph* graph = nullptr;
  int start = 0;
  const FirstHop* first_hop = nullptr;
  RateProfile env;
  std::uint64_t seed = 0;
  int max_visits = 64;
};

// Fills out[w] with the total demand of walk w (and latency[w] with its
// critical path when given). Returns the number of walks
// cut off by the visit cap. Both variants produce identical samples.
std::size_t random_walks_serial(const WalkJob& job, std::span<double> out,
                               std::span<double> latency = {});
std::size_t random_walks_parallel(const WalkJob& job, std::span<double> out,
                                 std::span<double> latency = {});

}  // namespace kernels

}  // namespace pdsim
