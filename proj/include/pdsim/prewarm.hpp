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

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>

#include "pdsim/distribution.hpp"
#include "pdsim/pdgraph.hpp"

namespace pdsim {

// Decision record for one speculative warm-up of a downstream backend.
struct PrewarmPlan {
  BackendSpec target;
  std::string target_unit;
  double p_s = 0.0;           // probability the target unit is selected
  double t_p = 0.0;           // warm-up duration
  double trigger_time = 0.0;  // t_s
  double p_e = 0.0;           // effectiveness probability at trigger_time
  double knob = 0.5;          // K
  // The effectiveness target was unreachable even when triggering at once.
  bool immediate = false;
};

// `completion` holds samples of the current unit's completion time t_c,
// conditioned on t_c > now. Returns no plan when p_s < K; otherwise the
// latest trigger time t_s on the completion distribution's bucket grid with
// p_s * P(t_c >= t_s + t_p) >= K, clamped to now.
std::optional<PrewarmPlan> plan_prewarm(const EmpiricalDistribution& completion,
                                        double p_s, double t_p, double knob,
                                        double now);

enum class CachePolicy { Lru, Epwq, Hermes };

const char* to_string(CachePolicy policy);
CachePolicy parse_cache_policy(const std::string& name);

struct CacheEntry {
  double size = 0.0;
  double last_access = 0.0;
  double warm_at = 0.0;
};

struct CacheAccess {
  bool hit = false;
  double ready_at = 0.0;  // when the content is usable
};

// Content still needed by queued or running requests, mapped to how soon:
// lower rank = needed sooner (running requests rank below every queued one).
using NeedRanks = std::map<std::string, double>;

// Warm-content store (KV prefixes, LoRA adapters) attached to an engine.
// Lru ignores `needed`. Epwq and Hermes evict unneeded entries first
// (least recently accessed), then the needed entry with the highest rank.
class CacheState {
 public:
  CacheState(double capacity, CachePolicy policy);

  // Hit iff the entry is resident and warm at `now`. A miss admits the entry
  // (or keeps waiting on an in-flight warm-up), evicting to fit.
  CacheAccess access(const std::string& content_id, double size, double warmup,
                     double now, const NeedRanks* needed = nullptr);

  // Starts warming an absent entry needed at `rank`. Only free space,
  // unneeded entries and entries ranked after `rank` are reclaimed; returns
  // false (nothing changes) when resident or when that is not enough.
  bool prefetch(const std::string& content_id, double size, double warmup,
                double now, const NeedRanks* needed = nullptr,
                double rank = std::numeric_limits<double>::infinity());

  bool resident(const std::string& content_id) const {
    return entries_.count(content_id) > 0;
  }
  bool warm(const std::string& content_id, double now) const;

  double capacity() const { return capacity_; }
  double used() const { return used_; }
  CachePolicy policy() const { return policy_; }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::size_t accesses() const { return hits_ + misses_; }
  std::size_t evictions() const { return evictions_; }
  double hit_ratio() const {
    return accesses() ? static_cast<double>(hits_) / static_cast<double>(accesses())
                      : 0.0;
  }
  const std::map<std::string, CacheEntry>& entries() const { return entries_; }

 private:
  void admit(const std::string& content_id, double size, double warm_at,
             double now, const NeedRanks* needed);
  // Rank of a resident entry: +inf when unneeded or under Lru.
  double need_rank(const std::string& content_id, const NeedRanks* needed) const;

  double capacity_;
  CachePolicy policy_;
  double used_ = 0.0;
  std::map<std::string, CacheEntry> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
  std::size_t evictions_ = 0;
};

enum class PrefetchTrigger { Enqueue, PlanTrigger };

struct PrefetchContext {
  PrefetchTrigger trigger = PrefetchTrigger::Enqueue;
  double time = 0.0;
  const PrewarmPlan* plan = nullptr;
};

struct PrefetchAction {
  std::string content_id;
  double size = 0.0;
  double at = 0.0;
};

// Lru never prefetches; Epwq prefetches when the request enters the waiting
// queue; Hermes prefetches at the plan's trigger time and, for requests that
// had no plan, on enqueue.
std::optional<PrefetchAction> cache_prefetch_signal(const CacheState& cache,
                                                    const std::string& content_id,
                                                    double size, CachePolicy policy,
                                                    const PrefetchContext& context);

struct PlanOutcome {
  PrewarmPlan plan;
  std::optional<double> arrival_time;  // the target request arrived
  std::optional<double> cancel_time;   // another branch was taken
};

struct WastageReport {
  double latency_saved = 0.0;
  double wasted_backend_time = 0.0;
  std::size_t plans = 0;
  std::size_t used = 0;
  std::size_t cancelled = 0;
};

WastageReport wastage_accounting(std::span<const PlanOutcome> outcomes);

}  // namespace pdsim
