#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pdsim/sched.hpp"

using namespace pdsim;

namespace {

DemandHistogram hist(std::vector<double> v, std::vector<double> p) {
  return DemandHistogram{std::move(v), std::move(p)};
}

RemainingDemand constant(double value, std::size_t n = 50) {
  RemainingDemand r;
  r.samples.assign(n, value);
  return r;
}

ApplicationInstance instance(std::uint64_t id, double arrival, RemainingDemand d) {
  ApplicationInstance a;
  a.id = id;
  a.app_id = "app";
  a.tenant = "t" + std::to_string(id % 3);
  a.arrival_time = arrival;
  a.set_remaining(std::move(d), 10);
  a.bucket_period = default_bucket_period(a.remaining, 10);
  return a;
}

}  // namespace

TEST_CASE("gittins rank examples") {
  CHECK(gittins_rank(hist({10}, {1}), 4) == 6.0);
  auto two = hist({2, 10}, {0.5, 0.5});
  CHECK(gittins_rank(two, 0) == doctest::Approx(4.0));
  CHECK(gittins_rank(two, 2) == doctest::Approx(8.0));
  CHECK_THROWS_AS(gittins_rank(two, 10), ExhaustedDistribution);
  CHECK_THROWS_AS(gittins_rank(DemandHistogram{}, 0), Error);
}

TEST_CASE("gittins prefers the likely-short app over the lower mean") {
  // A finishes within 9 s with probability 0.16, B with 0.003, yet B has the
  // smaller mean.
  auto a = hist({1, 100}, {0.16, 0.84});
  auto b = hist({8, 20}, {0.003, 0.997});
  CHECK(b.mean() < a.mean());
  CHECK(gittins_rank(a, 0) < gittins_rank(b, 0));
}

TEST_CASE("gittins rank equals the grid brute force") {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const double lo = 1 + rng.uniform() * 50;
    const double range = 1 + rng.uniform() * 500;
    const double step = range * 1e-3;
    const int points = 1 + static_cast<int>(rng.below(10));
    std::vector<int> idx;
    for (int k = 0; k < points; ++k) idx.push_back(static_cast<int>(rng.below(1001)));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    std::vector<double> values, probs;
    double total = 0;
    for (int k : idx) {
      values.push_back(lo + k * step);
      probs.push_back(0.05 + rng.uniform());
      total += probs.back();
    }
    for (auto& p : probs) p /= total;
    const double age = rng.uniform() < 0.3 ? 0.0 : rng.uniform() * values.back() * 0.9;
    if (values.back() <= age) continue;
    const double want = oracle::gittins_grid(values, probs, age, lo, step, 1000);
    const double got = gittins_rank(hist(values, probs), age);
    CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, want));
    CHECK(got > 0);
  }
}

TEST_CASE("point masses reduce to remaining time and decrease with age") {
  double prev = std::numeric_limits<double>::infinity();
  for (double age : {0.0, 1.0, 2.5, 7.0, 9.9}) {
    const double g = gittins_rank(hist({10}, {1}), age);
    CHECK(g == 10 - age);
    CHECK(g < prev);
    prev = g;
  }
  EmpiricalDistribution d;
  for (int i = 0; i < 30; ++i) d.add(42);
  CHECK(gittins_rank(d, 2) == 40);
}

TEST_CASE("histograms") {
  std::vector<double> s{1, 1, 2, 9};
  auto h = make_histogram(s, 2);
  REQUIRE(h.values.size() == 2);
  CHECK(h.values[0] == doctest::Approx(4.0 / 3.0));
  CHECK(h.values[1] == 9);
  CHECK(h.probabilities[0] == doctest::Approx(0.75));
  std::vector<double> flat(10, 3.0);
  auto p = make_histogram(flat, 10);
  CHECK(p.values == std::vector<double>{3.0});
  CHECK(p.probabilities == std::vector<double>{1.0});
  auto e = exact_histogram(s);
  CHECK(e.values == std::vector<double>{1, 2, 9});
  CHECK(e.mean() == doctest::Approx(13.0 / 4.0));
}

TEST_CASE("lstf slack") {
  CHECK(lstf_slack(50, 10, 100, 20) == 40);
  CHECK(lstf_slack(50, 10, 30, 20) == -30);
  CHECK(lstf_slack(50, 50, 70, 20) == 50);
  // Antitone in sup, monotone in deadline and age.
  CHECK(lstf_slack(60, 10, 100, 20) < lstf_slack(50, 10, 100, 20));
  CHECK(lstf_slack(50, 10, 110, 20) > lstf_slack(50, 10, 100, 20));
  CHECK(lstf_slack(50, 15, 100, 20) > lstf_slack(50, 10, 100, 20));
  CHECK(lstf_slack(hist({5, 50}, {0.9, 0.1}), 10, 100, 20) == 40);
}

TEST_CASE("baseline priority keys") {
  auto a = instance(1, 5, constant(20));
  auto b = instance(2, 3, constant(20));
  auto ka = compute_priority(Policy::FcfsApp, a, 10);
  auto kb = compute_priority(Policy::FcfsApp, b, 10);
  CHECK(ka.key == 5);
  CHECK(kb.key == 3);
  CHECK(kb < ka);

  a.deadline = 40;
  b.deadline = 90;
  CHECK(compute_priority(Policy::Edf, a, 10).key == 40);
  CHECK(compute_priority(Policy::Edf, b, 10).key == 90);

  auto c = instance(3, 0, constant(20));
  CHECK_THROWS_AS(compute_priority(Policy::Edf, c, 1), Error);
  CHECK_THROWS_AS(compute_priority(Policy::Lstf, c, 1), Error);

  std::map<std::string, double> served{{"t1", 30}, {"t2", 5}};
  PriorityContext ctx{2.0, &served};
  CHECK(compute_priority(Policy::FairShare, a, 0, ctx).key == 30);
  CHECK(compute_priority(Policy::FairShare, b, 0, ctx).key == 5);
}

TEST_CASE("gittins and srpt agree on point masses") {
  auto a = instance(1, 0, constant(30));
  a.attained_service = 12;
  const auto g = compute_priority(Policy::Gittins, a, 50);
  const auto s = compute_priority(Policy::SrptMean, a, 50);
  CHECK(g.key == 18);
  CHECK(s.key == 18);
}

TEST_CASE("overrun applies the penalty rank") {
  auto a = instance(1, 0, constant(10));
  a.attained_service = 25;
  PriorityContext ctx{2.0, nullptr};
  const auto p = compute_priority(Policy::Gittins, a, 30, ctx);
  CHECK(p.overrun);
  CHECK(p.key == 50);
  // Round-off right at the point mass is not an overrun.
  a.attained_service = 10 + 1e-12;
  const auto q = compute_priority(Policy::Gittins, a, 30, ctx);
  CHECK_FALSE(q.overrun);
  CHECK(q.key == 0);
}

TEST_CASE("lstf key uses critical-path samples") {
  RemainingDemand d = constant(100);
  d.latency.assign(50, 40);
  auto a = instance(1, 0, d);
  a.deadline = 70;
  a.attained_latency = 10;  // since the estimate
  a.latency_base = 0;
  const auto p = compute_priority(Policy::Lstf, a, 20);
  CHECK(p.key == lstf_slack(40, 10, 70, 20) + 20);
}

TEST_CASE("priority order is total and deterministic") {
  std::vector<Priority> ps;
  for (std::uint64_t i = 0; i < 20; ++i) {
    Priority p;
    p.key = static_cast<double>(i % 3);
    p.arrival_time = static_cast<double>(i % 5);
    p.id = i;
    ps.push_back(p);
  }
  auto a = ps, b = ps;
  std::reverse(b.begin(), b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
}

TEST_CASE("refresh contract") {
  std::vector<ApplicationInstance> live;
  for (std::uint64_t i = 0; i < 5; ++i) live.push_back(instance(i, 0, constant(10 + i)));
  CHECK(refresh_priorities(live, 0, Policy::Gittins) == 5);
  const auto before = live;
  SUBCASE("nothing due") {
    CHECK(refresh_priorities(live, 0.5, Policy::Gittins) == 0);
    for (std::size_t i = 0; i < live.size(); ++i) {
      CHECK(live[i].priority.key == before[i].priority.key);
      CHECK(live[i].last_refresh == before[i].last_refresh);
    }
  }
  SUBCASE("an observation refreshes mid-period") {
    live[2].observation_pending = true;
    live[2].attained_service = 0.25;
    CHECK(refresh_priorities(live, 0.5, Policy::Gittins) == 1);
    CHECK(live[2].priority.key == 12 - 0.25);
    CHECK(live[1].priority.key == before[1].priority.key);
  }
  SUBCASE("elapsed period refreshes") {
    CHECK(refresh_priorities(live, 100, Policy::Gittins) == 5);
  }
}

TEST_CASE("refresh kernels agree") {
  SplitMix64 rng(8);
  std::vector<ApplicationInstance> live;
  for (std::uint64_t i = 0; i < 5000; ++i) {
    RemainingDemand d;
    for (int k = 0; k < 100; ++k) d.samples.push_back(1 + rng.uniform() * 100);
    auto a = instance(i, rng.uniform() * 10, d);
    a.attained_service = rng.uniform() * 20;
    live.push_back(a);
  }
  auto other = live;
  const auto n1 = kernels::refresh_serial(live, 5, Policy::Gittins, {});
  const auto n2 = kernels::refresh_parallel(other, 5, Policy::Gittins, {});
  CHECK(n1 == n2);
  for (std::size_t i = 0; i < live.size(); ++i) {
    CHECK(live[i].priority.key == other[i].priority.key);
    CHECK(live[i].priority.overrun == other[i].priority.overrun);
  }
}

TEST_CASE("policy names") {
  for (auto p : all_policies()) CHECK(parse_policy(to_string(p)) == p);
  CHECK(parse_policy("srpt-mean") == Policy::SrptMean);
  CHECK_THROWS_AS(parse_policy("round-robin"), Error);
}
