#include <cmath>
#include <vector>

#include "doctest.h"
#include "pdsim/common.hpp"
#include "pdsim/prewarm.hpp"

using namespace pdsim;

namespace {

double survival(const std::vector<double>& s, double t) {
  double n = 0;
  for (double v : s) n += v >= t ? 1 : 0;
  return n / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("plan_prewarm examples") {
  EmpiricalDistribution point(std::vector<double>(20, 60.0), 1000, 10);
  SUBCASE("below the knob") {
    CHECK_FALSE(plan_prewarm(point, 0.3, 10, 0.5, 0));
  }
  SUBCASE("point mass") {
    auto plan = plan_prewarm(point, 1.0, 10, 0.5, 0);
    REQUIRE(plan);
    CHECK(plan->trigger_time == doctest::Approx(50));
    CHECK(plan->p_e == doctest::Approx(1.0));
    CHECK_FALSE(plan->immediate);
  }
  SUBCASE("two-point completion") {
    std::vector<double> s;
    for (int i = 0; i < 10; ++i) {
      s.push_back(40);
      s.push_back(80);
    }
    EmpiricalDistribution d(s, 1000, 10);
    auto plan = plan_prewarm(d, 0.8, 10, 0.4, 0);
    REQUIRE(plan);
    CHECK(plan->trigger_time == doctest::Approx(70));
    CHECK(plan->p_e == doctest::Approx(0.4));
  }
  SUBCASE("unit nearly done triggers at once") {
    auto plan = plan_prewarm(point, 1.0, 10, 0.5, 55);
    REQUIRE(plan);
    CHECK(plan->trigger_time == 55);
    CHECK(plan->immediate);
    CHECK(plan->p_e == 0.0);
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(plan_prewarm(point, 1.0, 10, 1.5, 0), Error);
    CHECK_THROWS_AS(plan_prewarm(point, 1.0, -1, 0.5, 0), Error);
  }
}

TEST_CASE("plan_prewarm picks the latest grid time meeting the knob") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s;
    const int n = 5 + static_cast<int>(rng.below(60));
    for (int i = 0; i < n; ++i) s.push_back(10 + rng.uniform() * 90);
    const double p_s = 0.2 + 0.8 * rng.uniform();
    const double knob = rng.uniform();
    const double t_p = rng.uniform() * 20;
    EmpiricalDistribution d(s, 1000, 10);
    auto plan = plan_prewarm(d, p_s, t_p, knob, 0);
    if (p_s < knob) {
      CHECK_FALSE(plan);
      continue;
    }
    REQUIRE(plan);
    // The grid splits [min, max] into ten equal buckets.
    double lo = s[0], hi = s[0];
    for (double v : s) lo = std::min(lo, v), hi = std::max(hi, v);
    const double step = (hi - lo) / 10;
    const double at = plan->trigger_time + t_p;
    if (plan->immediate) continue;
    CHECK(p_s * survival(s, at) >= knob - 1e-12);
    CHECK(plan->p_e == doctest::Approx(p_s * survival(s, at)));
    // One grid step later the knob is no longer met.
    if (at + step <= hi + 1e-9 && step > 0) {
      CHECK(p_s * survival(s, at + step * (1 + 1e-9)) < knob);
    }
  }
}

TEST_CASE("lru cache") {
  CacheState c(10, CachePolicy::Lru);
  CHECK_FALSE(c.access("a", 4, 0, 0).hit);
  CHECK_FALSE(c.access("b", 4, 0, 1).hit);
  CHECK(c.access("a", 4, 0, 2).hit);
  CHECK(c.entries().at("a").last_access == 2);
  // c needs 4 more; b is least recently accessed.
  CHECK_FALSE(c.access("c", 4, 0, 3).hit);
  CHECK(c.resident("a"));
  CHECK_FALSE(c.resident("b"));
  CHECK(c.resident("c"));
  CHECK(c.used() <= c.capacity());
  CHECK(c.hits() == 1);
  CHECK(c.misses() == 3);
  CHECK(c.hits() + c.misses() == c.accesses());
  CHECK(c.evictions() == 1);
  CHECK_THROWS_AS(c.access("huge", 11, 0, 4), Error);
}

TEST_CASE("entry still warming is a miss") {
  CacheState c(10, CachePolicy::Lru);
  auto first = c.access("a", 2, 5, 0);
  CHECK_FALSE(first.hit);
  CHECK(first.ready_at == 5);
  auto mid = c.access("a", 2, 5, 3);
  CHECK_FALSE(mid.hit);
  CHECK(mid.ready_at == 5);
  CHECK(c.access("a", 2, 5, 5).hit);
}

TEST_CASE("prefetch signal per policy") {
  CacheState lru(10, CachePolicy::Lru), epwq(10, CachePolicy::Epwq),
      hermes(10, CachePolicy::Hermes);
  PrefetchContext enq{PrefetchTrigger::Enqueue, 12, nullptr};
  CHECK_FALSE(cache_prefetch_signal(lru, "x", 1, CachePolicy::Lru, enq));
  auto e = cache_prefetch_signal(epwq, "x", 1, CachePolicy::Epwq, enq);
  REQUIRE(e);
  CHECK(e->at == 12);
  PrewarmPlan plan;
  plan.trigger_time = 7;
  PrefetchContext trig{PrefetchTrigger::PlanTrigger, 7, &plan};
  CHECK_FALSE(cache_prefetch_signal(epwq, "x", 1, CachePolicy::Epwq, trig));
  auto h = cache_prefetch_signal(hermes, "x", 1, CachePolicy::Hermes, trig);
  REQUIRE(h);
  CHECK(h->at == 7);
  CHECK_THROWS_AS(cache_prefetch_signal(lru, "x", 1, CachePolicy::Epwq, enq), Error);
  hermes.prefetch("x", 1, 0, 0);
  CHECK_FALSE(cache_prefetch_signal(hermes, "x", 1, CachePolicy::Hermes, enq));
}

TEST_CASE("queue prefetch timelines") {
  SUBCASE("service starts after warm-up") {
    CacheState c(10, CachePolicy::Epwq);
    CHECK(c.prefetch("kv", 2, 5, 12));
    CHECK(c.access("kv", 2, 5, 20).hit);
  }
  SUBCASE("dispatched before warm-up completes") {
    CacheState c(10, CachePolicy::Epwq);
    CHECK(c.prefetch("kv", 2, 5, 12));
    auto r = c.access("kv", 2, 5, 14);
    CHECK_FALSE(r.hit);
    CHECK(r.ready_at == 17);
  }
}

TEST_CASE("queue-aware eviction") {
  CacheState c(6, CachePolicy::Epwq);
  c.access("run", 2, 0, 0);
  c.access("soon", 2, 0, 1);
  c.access("idle", 2, 0, 2);
  NeedRanks needed{{"run", -1}, {"soon", 0}};
  SUBCASE("unneeded content goes first despite recent use") {
    c.access("new", 2, 0, 3, &needed);
    CHECK_FALSE(c.resident("idle"));
    CHECK(c.resident("run"));
    CHECK(c.resident("soon"));
  }
  SUBCASE("then the needed entry ranked last") {
    needed["idle"] = 1;
    c.access("new", 2, 0, 3, &needed);
    CHECK_FALSE(c.resident("idle"));
    needed["new"] = -1;
    c.access("newer", 2, 0, 4, &needed);
    CHECK_FALSE(c.resident("soon"));
    CHECK(c.resident("run"));
  }
  SUBCASE("prefetch does not displace content needed sooner") {
    needed["idle"] = 1;
    CHECK_FALSE(c.prefetch("later", 2, 0, 3, &needed, 5));
    CHECK(c.resident("idle"));
    CHECK(c.prefetch("earlier", 2, 0, 3, &needed, 0.5));
    CHECK_FALSE(c.resident("idle"));
  }
  SUBCASE("lru ignores the queue") {
    CacheState l(6, CachePolicy::Lru);
    l.access("run", 2, 0, 0);
    l.access("soon", 2, 0, 1);
    l.access("idle", 2, 0, 2);
    l.access("new", 2, 0, 3, &needed);
    CHECK_FALSE(l.resident("run"));
  }
}

TEST_CASE("cache occupancy never exceeds capacity") {
  SplitMix64 rng(5);
  for (auto policy : {CachePolicy::Lru, CachePolicy::Epwq, CachePolicy::Hermes}) {
    CacheState c(20, policy);
    NeedRanks needed;
    for (int i = 0; i < 2000; ++i) {
      const auto id = "c" + std::to_string(rng.below(30));
      const double size = 1 + static_cast<double>(rng.below(6));
      if (rng.uniform() < 0.3) needed[id] = static_cast<double>(rng.below(10));
      if (rng.uniform() < 0.5) {
        c.prefetch(id, size, 1, i, &needed, static_cast<double>(rng.below(10)));
      } else {
        c.access(id, size, 1, i, &needed);
      }
      double sum = 0;
      for (const auto& [k, e] : c.entries()) sum += e.size;
      CHECK(sum == doctest::Approx(c.used()));
      CHECK(c.used() <= c.capacity());
    }
    CHECK(c.hits() + c.misses() == c.accesses());
  }
}

TEST_CASE("wastage accounting") {
  PrewarmPlan p;
  p.trigger_time = 50;
  p.t_p = 10;
  std::vector<PlanOutcome> on_time{{p, 60.0, std::nullopt}};
  auto a = wastage_accounting(on_time);
  CHECK(a.latency_saved == 10);
  CHECK(a.wasted_backend_time == 0);
  std::vector<PlanOutcome> early{{p, 90.0, std::nullopt}};
  auto b = wastage_accounting(early);
  CHECK(b.latency_saved == 10);
  CHECK(b.wasted_backend_time == 30);
  std::vector<PlanOutcome> late{{p, 53.0, std::nullopt}};
  CHECK(wastage_accounting(late).latency_saved == 3);
  std::vector<PlanOutcome> cancelled{{p, std::nullopt, 70.0}};
  auto c = wastage_accounting(cancelled);
  CHECK(c.wasted_backend_time == 20);
  CHECK(c.latency_saved == 0);
  CHECK(c.cancelled == 1);
  std::vector<PlanOutcome> all{on_time[0], early[0], cancelled[0]};
  auto t = wastage_accounting(all);
  CHECK(t.plans == 3);
  CHECK(t.used == 2);
  CHECK(t.wasted_backend_time == 50);
}

TEST_CASE("cache policy names") {
  for (auto p : {CachePolicy::Lru, CachePolicy::Epwq, CachePolicy::Hermes}) {
    CHECK(parse_cache_policy(to_string(p)) == p);
  }
  CHECK_THROWS_AS(parse_cache_policy("arc"), Error);
}
