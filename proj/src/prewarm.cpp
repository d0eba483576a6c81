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

#include "pdsim/prewarm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pdsim/common.hpp"

namespace pdsim {

namespace {
constexpr double kProbabilityTolerance = 1e-12;
}

std::optional<PrewarmPlan> plan_prewarm(const EmpiricalDistribution& completion,
                                        double p_s, double t_p, double knob,
                                        double now) {
  if (!(knob >= 0.0 && knob <= 1.0)) throw Error("prewarm knob must be in [0,1]");
  if (!(t_p >= 0.0)) throw Error("warm-up duration must be >= 0");
  if (p_s < knob) return std::nullopt;
  const auto samples = completion.to_vector();
  auto survival = [&](double t) {
    std::size_t n = 0;
    for (double v : samples) n += v >= t ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(samples.size());
  };
  PrewarmPlan plan;
  plan.p_s = p_s;
  plan.t_p = t_p;
  plan.knob = knob;
  // Latest boundary b with p_s * P(t_c >= b) >= K; the lowest boundary is the
  // minimum sample, where the survival probability is 1.
  const auto bounds = completion.grid().boundaries();
  double chosen = bounds.front();
  for (auto it = bounds.rbegin(); it != bounds.rend(); ++it) {
    if (p_s * survival(*it) + kProbabilityTolerance >= knob) {
      chosen = *it;
      break;
    }
  }
  plan.trigger_time = chosen - t_p;
  if (plan.trigger_time < now) {
    plan.trigger_time = now;
    plan.immediate = true;
  }
  plan.p_e = p_s * survival(plan.trigger_time + t_p);
  plan.immediate = plan.immediate && plan.p_e + kProbabilityTolerance < knob;
  return plan;
}

const char* to_string(CachePolicy policy) {
  switch (policy) {
    case CachePolicy::Lru: return "lru";
    case CachePolicy::Epwq: return "epwq";
    case CachePolicy::Hermes: return "hermes";
  }
  return "unknown";
}

CachePolicy parse_cache_policy(const std::string& name) {
  if (name == "lru") return CachePolicy::Lru;
  if (name == "epwq") return CachePolicy::Epwq;
  if (name == "hermes") return CachePolicy::Hermes;
  throw Error("unknown cache policy '" + name + "'");
}

CacheState::CacheState(double capacity, CachePolicy policy)
    : capacity_(capacity), policy_(policy) {
  if (!(capacity >= 0.0)) throw Error("cache capacity must be >= 0");
}

bool CacheState::warm(const std::string& content_id, double now) const {
  auto it = entries_.find(content_id);
  return it != entries_.end() && it->second.warm_at <= now;
}

double CacheState::need_rank(const std::string& content_id,
                             const NeedRanks* needed) const {
  constexpr double kUnneeded = std::numeric_limits<double>::infinity();
  if (policy_ == CachePolicy::Lru || needed == nullptr) return kUnneeded;
  auto it = needed->find(content_id);
  return it == needed->end() ? kUnneeded : it->second;
}

void CacheState::admit(const std::string& content_id, double size,
                       double warm_at, double now, const NeedRanks* needed) {
  if (size > capacity_) {
    throw Error("content '" + content_id + "' is larger than the cache");
  }
  while (used_ + size > capacity_) {
    auto victim = entries_.end();
    double victim_rank = 0.0;
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      const double r = need_rank(it->first, needed);
      if (victim == entries_.end() || r > victim_rank ||
          (r == victim_rank && it->second.last_access < victim->second.last_access)) {
        victim = it;
        victim_rank = r;
      }
    }
    used_ -= victim->second.size;
    entries_.erase(victim);
    ++evictions_;
  }
  entries_[content_id] = CacheEntry{size, now, warm_at};
  used_ += size;
}

CacheAccess CacheState::access(const std::string& content_id, double size,
                               double warmup, double now, const NeedRanks* needed) {
  auto it = entries_.find(content_id);
  if (it != entries_.end()) {
    it->second.last_access = now;
    if (it->second.warm_at <= now) {
      ++hits_;
      return {true, now};
    }
    ++misses_;
    return {false, it->second.warm_at};
  }
  ++misses_;
  admit(content_id, size, now + warmup, now, needed);
  return {false, now + warmup};
}

bool CacheState::prefetch(const std::string& content_id, double size,
                          double warmup, double now, const NeedRanks* needed,
                          double rank) {
  if (resident(content_id)) return false;
  if (size > capacity_) return false;
  double reclaimable = capacity_ - used_;
  for (const auto& [id, e] : entries_) {
    const double r = need_rank(id, needed);
    if (r > rank || std::isinf(r)) reclaimable += e.size;
  }
  if (reclaimable < size) return false;
  admit(content_id, size, now + warmup, now, needed);
  return true;
}

std::optional<PrefetchAction> cache_prefetch_signal(const CacheState& cache,
                                                    const std::string& content_id,
                                                    double size, CachePolicy policy,
                                                    const PrefetchContext& context) {
  if (policy != cache.policy()) throw Error("prefetch policy does not match cache");
  if (cache.resident(content_id)) return std::nullopt;
  switch (policy) {
    case CachePolicy::Lru:
      return std::nullopt;
    case CachePolicy::Epwq:
      if (context.trigger != PrefetchTrigger::Enqueue) return std::nullopt;
      return PrefetchAction{content_id, size, context.time};
    case CachePolicy::Hermes:
      if (context.trigger == PrefetchTrigger::PlanTrigger) {
        const double at = context.plan ? context.plan->trigger_time : context.time;
        return PrefetchAction{content_id, size, at};
      }
      return PrefetchAction{content_id, size, context.time};
  }
  return std::nullopt;
}

WastageReport wastage_accounting(std::span<const PlanOutcome> outcomes) {
  WastageReport r;
  for (const auto& o : outcomes) {
    ++r.plans;
    const double t_s = o.plan.trigger_time;
    const double t_p = o.plan.t_p;
    if (o.arrival_time) {
      ++r.used;
      const double t_a = *o.arrival_time;
      r.latency_saved += std::min(t_p, std::max(0.0, t_a - t_s));
      r.wasted_backend_time += std::max(0.0, t_a - (t_s + t_p));
    } else if (o.cancel_time) {
      ++r.cancelled;
      r.wasted_backend_time += std::max(0.0, *o.cancel_time - t_s);
    }
  }
  return r;
}

}  // namespace pdsim
