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

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pdsim/sim.hpp"

namespace pdsim {

struct AppMetrics {
  std::uint64_t id = 0;
  std::string app_id;
  std::string size_class;
  double arrival = 0.0;
  double completion = 0.0;
  double act = 0.0;
  std::optional<double> deadline;
  std::string deadline_class;
  std::optional<bool> met;
  bool overrun = false;
};

struct Aggregates {
  std::size_t apps = 0;
  double mean_act = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  std::optional<double> dsr_overall;
  std::map<std::string, double> dsr_by_class;
  std::map<std::string, double> mean_act_by_size;
  std::size_t cache_hits = 0;
  std::size_t cache_accesses = 0;
  double cache_hit_ratio = 0.0;
  double latency_saved = 0.0;
  double wasted_backend_time = 0.0;
  std::size_t prewarm_plans = 0;
  std::size_t preemptions = 0;
  std::size_t overruns = 0;
  std::size_t events = 0;
};

struct Metrics {
  std::vector<AppMetrics> apps;
  Aggregates aggregates;
  std::vector<std::pair<double, double>> cdf;  // (act, cumulative fraction)
};

// Nearest-rank percentile of an ascending list, q in (0, 1].
double percentile(const std::vector<double>& sorted, double q);

Metrics compute_metrics(const SimResult& result);

nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& doc);
std::string cdf_csv(const Metrics& m);

}  // namespace pdsim
