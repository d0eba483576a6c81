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
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdsim/common.hpp"
#include "pdsim/distribution.hpp"
#include "pdsim/estimator.hpp"

namespace pdsim {

enum class Policy { Gittins, Lstf, FcfsRequest, FcfsApp, SrptMean, Edf, FairShare };

const char* to_string(Policy policy);
Policy parse_policy(const std::string& name);
const std::vector<Policy>& all_policies();

// Size-based policies order by a positive service quantity and use a
// multiplicative preemption hysteresis; the others order by time stamps.
bool ratio_keyed(Policy policy);
bool preemptive(Policy policy);

// Discrete demand distribution: ascending support values with probabilities.
struct DemandHistogram {
  std::vector<double> values;
  std::vector<double> probabilities;

  bool empty() const { return values.empty(); }
  double max() const { return values.back(); }
  double mean() const;
};

// One support point per non-empty bucket, placed at the mean of the samples
// in it. A constant sample list yields an exact point mass.
DemandHistogram make_histogram(std::span<const double> samples,
                               std::size_t bucket_count);
// One support point per distinct sample value.
DemandHistogram exact_histogram(std::span<const double> samples);

class ExhaustedDistribution : public Error {
 public:
  ExhaustedDistribution() : Error("exhausted distribution: no demand exceeds age") {}
};

// Gittins rank of a job with demand distribution `dist` that has received
// `age` seconds of service. The infimum over service budgets is taken over
// the support points above `age`. Throws ExhaustedDistribution when no
// support point exceeds `age`.
double gittins_rank(const DemandHistogram& dist, double age);
double gittins_rank(const EmpiricalDistribution& dist, double age);

// Worst-case slack before the deadline; negative when the worst case can no
// longer finish in time.
double lstf_slack(double sup_demand, double age, double deadline, double now);
double lstf_slack(const DemandHistogram& dist, double age, double deadline,
                  double now);

struct Priority {
  Policy policy = Policy::Gittins;
  double key = 0.0;  // lower is served first
  double arrival_time = 0.0;
  std::uint64_t id = 0;
  bool overrun = false;  // demand estimate exhausted; penalty rank applied
};

// Total order: key, then arrival time, then instance id.
bool operator<(const Priority& a, const Priority& b);

struct ApplicationInstance {
  std::uint64_t id = 0;
  std::string app_id;
  std::string tenant;
  double arrival_time = 0.0;
  std::optional<double> deadline;
  // Service consumed so far, summed over all executed tasks.
  double attained_service = 0.0;
  // Attained service at the moment `remaining` was estimated.
  double estimate_base = 0.0;
  RemainingDemand remaining;
  DemandHistogram histogram;
  double last_refresh = -std::numeric_limits<double>::infinity();
  double bucket_period = 1.0;
  bool observation_pending = true;
  Priority priority;
  std::optional<double> completion_time;

  // Wall time during which at least one task of the instance executed.
  double attained_latency = 0.0;
  double latency_base = 0.0;
  // Worst-case remaining critical path of the estimate; falls back to the
  // demand maximum when the estimate carries no critical-path samples.
  double latency_sup = 0.0;
  bool critical_path = false;

  // Age relative to the current remaining-demand estimate.
  double estimate_age() const {
    return std::max(0.0, attained_service - estimate_base);
  }
  // Critical-path progress relative to the current estimate.
  double latency_age() const {
    return critical_path ? std::max(0.0, attained_latency - latency_base)
                         : estimate_age();
  }
  // Replaces the estimate; histogram built with `bucket_count` buckets.
  void set_remaining(RemainingDemand demand, std::size_t bucket_count);
};

struct PriorityContext {
  double overrun_penalty = 2.0;
  // Accumulated service per tenant (fair-share baseline).
  const std::map<std::string, double>* tenant_service = nullptr;
};

Priority compute_priority(Policy policy, const ApplicationInstance& app,
                          double now, const PriorityContext& ctx = {});

// Recomputes the priority of every instance whose bucket period elapsed or
// that received an observation since its last refresh. Returns the number of
// refreshed instances.
std::size_t refresh_priorities(std::span<ApplicationInstance> live, double now,
                               Policy policy, const PriorityContext& ctx = {});

// Default refresh period: demand range of the estimate over the bucket count.
double default_bucket_period(const RemainingDemand& demand,
                             std::size_t bucket_count);

namespace kernels {

std::size_t refresh_serial(std::span<ApplicationInstance> live, double now,
                           Policy policy, const PriorityContext& ctx);
std::size_t refresh_parallel(std::span<ApplicationInstance> live, double now,
                             Policy policy, const PriorityContext& ctx);

}  // namespace kernels

}  // namespace pdsim
