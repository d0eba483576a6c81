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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdsim/pdgraph.hpp"
#include "pdsim/prewarm.hpp"
#include "pdsim/sched.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

struct EngineConfig {
  std::string id = "engine-0";
  int slots = 8;
  RateProfile rates;
  // Warm-content capacity in bytes; 0 disables cache modelling (always warm).
  double cache_capacity = 0.0;
  CachePolicy cache_policy = CachePolicy::Lru;
  // Models served; an empty list serves every model.
  std::vector<std::string> models;
};

struct PoolConfig {
  int pool_size = 0;  // 0 = unlimited
  double keep_alive = 0.0;
};

struct Environment {
  std::vector<EngineConfig> engines{EngineConfig{}};
  std::map<BackendKind, PoolConfig> pools;

  const RateProfile& reference_rates() const { return engines.front().rates; }
  void validate() const;
};

struct SchedulerConfig {
  Policy policy = Policy::Gittins;
  std::size_t bucket_count = 10;
  std::size_t mc_samples = 1000;
  int max_visits = 64;
  std::size_t min_conditional_samples = 5;
  bool refinement = true;
  bool preemption = true;
  double hysteresis = 1.5;      // ratio-keyed policies
  double preempt_margin = 1.0;  // time-keyed policies, seconds
  double overrun_penalty = 2.0;
};

struct PrewarmConfig {
  bool enabled = true;
  double knob = 0.5;
  std::size_t completion_samples = 200;
};

struct SimConfig {
  Environment env;
  SchedulerConfig scheduler;
  PrewarmConfig prewarm;
  std::uint64_t seed = 1;
  // Multiplies every drawn length and duration of the true runs.
  double demand_scale = 1.0;
  bool event_log = false;
};

// One unit visit of an application's realized execution.
struct TrueVisit {
  std::string unit_id;
  double input_len = 0.0;
  double output_len = 0.0;
  int parallelism = 1;
  double duration = 0.0;
};

using TrueRun = std::vector<TrueVisit>;

// Realized executions for every arrival: a stored profiling trial replayed
// verbatim, or a walk over the marginals when the graph holds no complete
// trial. Independent of the scheduling policy.
std::vector<TrueRun> draw_true_runs(const WorkloadSpec& workload,
                                    const std::map<std::string, PDGraph>& graphs,
                                    std::uint64_t seed, double demand_scale = 1.0);

// Un-queued critical path of a true run on warm backends.
double standalone_time(const TrueRun& run, const RateProfile& rates);

struct AppOutcome {
  std::uint64_t id = 0;
  std::string app_id;
  std::string size_class;
  std::string tenant;
  double arrival = 0.0;
  double completion = 0.0;
  std::optional<double> deadline;
  std::string deadline_class;
  bool overrun = false;
  double service = 0.0;
};

struct SimResult {
  std::vector<AppOutcome> apps;
  std::size_t events = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_accesses = 0;
  WastageReport wastage;
  std::size_t preemptions = 0;
  std::size_t refreshes = 0;
  double refresh_wall_ns = 0.0;  // wall-clock; excluded from deterministic output
  std::size_t capped_walks = 0;
  std::vector<double> engine_busy;  // slot-seconds of service per engine
  double horizon = 0.0;
  std::string event_log;
};

// Runs the workload to quiescence. Rejects unknown application ids and
// invalid graphs before any event is processed.
SimResult simulate(const WorkloadSpec& workload,
                   const std::map<std::string, PDGraph>& graphs,
                   const SimConfig& config);

}  // namespace pdsim
