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

#include "pdsim/sched.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <tuple>

namespace pdsim {

const char* to_string(Policy policy) {
  switch (policy) {
    case Policy::Gittins: return "gittins";
    case Policy::Lstf: return "lstf";
    case Policy::FcfsRequest: return "fcfs-request";
    case Policy::FcfsApp: return "fcfs-app";
    case Policy::SrptMean: return "srpt-mean";
    case Policy::Edf: return "edf";
    case Policy::FairShare: return "fair-share";
  }
  return "unknown";
}

const std::vector<Policy>& all_policies() {
  static const std::vector<Policy> all{Policy::Gittins,  Policy::Lstf,
                                       Policy::FcfsRequest, Policy::FcfsApp,
                                       Policy::SrptMean, Policy::Edf,
                                       Policy::FairShare};
  return all;
}

Policy parse_policy(const std::string& name) {
  for (Policy p : all_policies()) {
    if (name == to_string(p)) return p;
  }
  throw Error("unknown policy '" + name + "'");
}

bool ratio_keyed(Policy policy) {
  return policy == Policy::Gittins || policy == Policy::SrptMean ||
         policy == Policy::FairShare;
}

bool preemptive(Policy policy) {
  return policy != Policy::FcfsApp && policy != Policy::FcfsRequest;
}

double DemandHistogram::mean() const {
  if (empty()) throw Error("no data");
  double m = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) m += values[k] * probabilities[k];
  return m;
}

DemandHistogram make_histogram(std::span<const double> samples,
                               std::size_t bucket_count) {
  if (samples.empty()) throw Error("no data");
  if (bucket_count == 0) throw Error("bucket count must be positive");
  auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  BucketGrid grid{*lo, *hi, *hi > *lo ? bucket_count : 1};
  std::vector<double> base(grid.count, std::numeric_limits<double>::infinity());
  std::vector<double> offset(grid.count, 0.0);
  std::vector<std::size_t> count(grid.count, 0);
  for (double v : samples) {
    auto i = grid.index(v);
    base[i] = std::min(base[i], v);
    ++count[i];
  }
  for (double v : samples) offset[grid.index(v)] += v - base[grid.index(v)];
  DemandHistogram h;
  const auto n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < grid.count; ++i) {
    if (count[i] == 0) continue;
    h.values.push_back(base[i] + offset[i] / static_cast<double>(count[i]));
    h.probabilities.push_back(static_cast<double>(count[i]) / n);
  }
  return h;
}

DemandHistogram exact_histogram(std::span<const double> samples) {
  if (samples.empty()) throw Error("no data");
  std::map<double, std::size_t> counts;
  for (double v : samples) ++counts[v];
  DemandHistogram h;
  const auto n = static_cast<double>(samples.size());
  for (auto [v, c] : counts) {
    h.values.push_back(v);
    h.probabilities.push_back(static_cast<double>(c) / n);
  }
  return h;
}

double gittins_rank(const DemandHistogram& dist, double age) {
  if (dist.empty()) throw Error("no data");
  const auto& v = dist.values;
  const auto& p = dist.probabilities;
  const auto first = static_cast<std::size_t>(
      std::upper_bound(v.begin(), v.end(), age) - v.begin());
  double mass = 0.0;
  for (std::size_t k = first; k < v.size(); ++k) mass += p[k];
  if (first == v.size() || mass <= 0.0) throw ExhaustedDistribution();
  // Conditional on X > age; suffix[k] = P(X >= v_k | X > age).
  const std::size_t m = v.size() - first;
  std::vector<double> suffix(m + 1, 0.0);
  for (std::size_t k = m; k-- > 0;) suffix[k] = suffix[k + 1] + p[first + k] / mass;
  double best = std::numeric_limits<double>::infinity();
  double done = 0.0;  // P(X - age <= budget | X > age)
  double work = 0.0;  // E[(X - age) 1{X - age <= budget} | X > age]
  for (std::size_t k = 0; k < m; ++k) {
    const double q = p[first + k] / mass;
    if (q <= 0.0) continue;
    const double budget = v[first + k] - age;
    done += q;
    work += q * budget;
    const double ratio = (work + suffix[k + 1] * budget) / done;
    best = std::min(best, ratio);
  }
  return best;
}

double gittins_rank(const EmpiricalDistribution& dist, double age) {
  if (dist.empty()) throw Error("no data");
  auto samples = dist.to_vector();
  return gittins_rank(exact_histogram(samples), age);
}

double lstf_slack(double sup_demand, double age, double deadline, double now) {
  return deadline - now - (sup_demand - age);
}

double lstf_slack(const DemandHistogram& dist, double age, double deadline,
                  double now) {
  if (dist.empty()) throw Error("no data");
  return lstf_slack(dist.max(), age, deadline, now);
}

bool operator<(const Priority& a, const Priority& b) {
  return std::tie(a.key, a.arrival_time, a.id) <
         std::tie(b.key, b.arrival_time, b.id);
}

void ApplicationInstance::set_remaining(RemainingDemand demand,
                                        std::size_t bucket_count) {
  remaining = std::move(demand);
  histogram = make_histogram(remaining.samples, bucket_count);
  estimate_base = attained_service;
  latency_base = attained_latency;
  critical_path = !remaining.latency.empty();
  latency_sup = critical_path
                    ? *std::max_element(remaining.latency.begin(), remaining.latency.end())
                    : histogram.max();
  observation_pending = true;
}

Priority compute_priority(Policy policy, const ApplicationInstance& app,
                          double now, const PriorityContext& ctx) {
  Priority pr;
  pr.policy = policy;
  pr.arrival_time = app.arrival_time;
  pr.id = app.id;
  const double age = app.estimate_age();
  switch (policy) {
    case Policy::Gittins:
      try {
        pr.key = gittins_rank(app.histogram, age);
      } catch (const ExhaustedDistribution&) {
        // Accumulated rounding can push age a hair past a point mass that
        // has in fact just been served; that is not an overrun.
        const double top = app.histogram.max();
        if (age - top <= 1e-9 * std::max(1.0, top)) {
          pr.key = 0.0;
        } else {
          pr.key = age * ctx.overrun_penalty;
          pr.overrun = true;
        }
      }
      break;
    case Policy::Lstf:
      if (!app.deadline) throw Error("lstf requires a deadline");
      // Ordering key is slack + now, so keys computed at different instants
      // stay comparable.
      pr.key = lstf_slack(app.latency_sup, app.latency_age(), *app.deadline, now) + now;
      break;
    case Policy::FcfsRequest:
    case Policy::FcfsApp:
      pr.key = app.arrival_time;
      break;
    case Policy::SrptMean:
      pr.key = app.histogram.mean() - age;
      break;
    case Policy::Edf:
      if (!app.deadline) throw Error("edf requires a deadline");
      pr.key = *app.deadline;
      break;
    case Policy::FairShare: {
      double served = 0.0;
      if (ctx.tenant_service) {
        auto it = ctx.tenant_service->find(app.tenant);
        if (it != ctx.tenant_service->end()) served = it->second;
      }
      pr.key = served;
      break;
    }
  }
  return pr;
}

double default_bucket_period(const RemainingDemand& demand,
                             std::size_t bucket_count) {
  const double hi = demand.max();
  double range = hi - demand.min();
  if (range <= 0.0) range = hi;
  const double period = range / static_cast<double>(std::max<std::size_t>(bucket_count, 1));
  return period > 0.0 ? period : 1.0;
}

namespace {

bool due(const ApplicationInstance& app, double now) {
  return app.observation_pending || now - app.last_refresh >= app.bucket_period;
}

void refresh_one(ApplicationInstance& app, double now, Policy policy,
                 const PriorityContext& ctx) {
  app.priority = compute_priority(policy, app, now, ctx);
  app.last_refresh = now;
  app.observation_pending = false;
}

}  // namespace

namespace kernels {

std::size_t refresh_serial(std::span<ApplicationInstance> live, double now,
                           Policy policy, const PriorityContext& ctx) {
  std::size_t refreshed = 0;
  for (auto& app : live) {
    if (!due(app, now)) continue;
    refresh_one(app, now, policy, ctx);
    ++refreshed;
  }
  return refreshed;
}

std::size_t refresh_parallel(std::span<ApplicationInstance> live, double now,
                             Policy policy, const PriorityContext& ctx) {
  const auto n = static_cast<std::int64_t>(live.size());
  std::size_t refreshed = 0;
  std::exception_ptr failure;
#pragma omp parallel for schedule(static) reduction(+ : refreshed) \
    if (n >= 4096 && !omp_in_parallel())
  for (std::int64_t i = 0; i < n; ++i) {
    auto& app = live[i];
    if (!due(app, now)) continue;
    try {
      refresh_one(app, now, policy, ctx);
      ++refreshed;
    } catch (...) {
#pragma omp critical(pdsim_refresh_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return refreshed;
}

}  // namespace kernels

std::size_t refresh_priorities(std::span<ApplicationInstance> live, double now,
                               Policy policy, const PriorityContext& ctx) {
  return kernels::refresh_parallel(live, now, policy, ctx);
}

}  // namespace pdsim
