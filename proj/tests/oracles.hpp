// Reference computations used by the unit and acceptance tests. Each one
// evaluates a definition directly, sharing no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pdsim/common.hpp"
#include "pdsim/pdgraph.hpp"
#include "pdsim/sched.hpp"

namespace oracle {

// E[min(X - a, b) | X > a] / P(X - a <= b | X > a) evaluated for every budget
// b on the lattice lo + j*step - age, j = 0..steps; returns the minimum.
inline double gittins_grid(const std::vector<double>& values,
                           const std::vector<double>& probs, double age, double lo,
                           double step, int steps) {
  double tail = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > age) tail += probs[i];
  }
  if (tail <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= steps; ++j) {
    const double b = (lo + j * step) - age;
    if (b <= 0.0) continue;
    double num = 0.0, done = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] <= age) continue;
      const double rest = values[i] - age;
      num += probs[i] * std::min(rest, b);
      if (rest <= b) done += probs[i];
    }
    if (done <= 0.0) continue;
    best = std::min(best, (num / tail) / (done / tail));
  }
  return best;
}

// Expected total demand of an acyclic graph from `start`: visit probability
// of every unit by forward propagation in topological order, times the
// unit's expected per-visit demand (independent draws of P, I, O).
inline double expected_demand(const pdsim::PDGraph& g, const std::string& start,
                              const pdsim::RateProfile& env) {
  std::map<std::string, int> indeg;
  for (const auto& [id, u] : g.units) {
    indeg.emplace(id, 0);
    for (const auto& [s, p] : u.successors) ++indeg[s];
  }
  std::vector<std::string> order;
  std::vector<std::string> ready;
  for (const auto& [id, d] : indeg) {
    if (d == 0) ready.push_back(id);
  }
  while (!ready.empty()) {
    auto id = ready.back();
    ready.pop_back();
    order.push_back(id);
    for (const auto& [s, p] : g.unit(id).successors) {
      if (--indeg[s] == 0) ready.push_back(s);
    }
  }
  if (order.size() != g.units.size()) throw pdsim::Error("graph has a cycle");
  auto mean = [](const pdsim::EmpiricalDistribution& d, double fallback) {
    if (d.empty()) return fallback;
    double s = 0.0;
    for (double v : d.samples()) s += v;
    return s / static_cast<double>(d.size());
  };
  std::map<std::string, double> visit;
  visit[start] = 1.0;
  double total = 0.0;
  for (const auto& id : order) {
    const double pv = visit[id];
    if (pv == 0.0) continue;
    const auto& u = g.unit(id);
    double e;
    if (u.is_llm()) {
      double requests = 1.0;
      if (!u.parallelism_dist.empty()) {
        requests = 0.0;
        for (double v : u.parallelism_dist.samples()) requests += std::max(1.0, std::round(v));
        requests /= static_cast<double>(u.parallelism_dist.size());
      }
      e = requests * (mean(u.input_dist, 0.0) / env.prefill_rate +
                      mean(u.output_dist, 0.0) / env.decode_rate);
    } else {
      e = mean(u.duration_dist, 0.0);
    }
    total += pv * e;
    for (const auto& [s, p] : u.successors) visit[s] += pv * p;
  }
  return total;
}

// Random acyclic graph: up to `max_units` units, edges only to later units,
// every distribution drawn from at most `max_support` distinct values.
inline pdsim::PDGraph random_dag(std::uint64_t seed, int max_units = 6,
                                 int max_support = 16) {
  pdsim::SplitMix64 rng(seed);
  pdsim::PDGraph g;
  g.app_id = "dag-" + std::to_string(seed);
  const int n = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_units)));
  auto name = [](int i) { return "u" + std::to_string(i); };
  g.entry_unit = name(0);
  auto fill = [&](pdsim::EmpiricalDistribution& d, double lo, double hi, bool integral) {
    const int support = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_support)));
    std::vector<double> pool;
    for (int k = 0; k < support; ++k) {
      double v = lo + rng.uniform() * (hi - lo);
      pool.push_back(integral ? std::round(v) : v);
    }
    const int count = 20 + static_cast<int>(rng.below(60));
    for (int k = 0; k < count; ++k) d.add(pool[rng.below(pool.size())]);
  };
  for (int i = 0; i < n; ++i) {
    const bool llm = rng.uniform() < 0.6;
    auto& u = g.add_unit(name(i), llm ? pdsim::BackendSpec::llm("m")
                                      : pdsim::BackendSpec::docker("img", 1.0));
    if (llm) {
      fill(u.input_dist, 50, 4000, true);
      fill(u.output_dist, 10, 600, true);
      fill(u.parallelism_dist, 1, 6, true);
    } else {
      fill(u.duration_dist, 0.5, 30, false);
    }
  }
  for (int i = 0; i + 1 < n; ++i) {
    // Keep every unit reachable: always link to the next one, sometimes to
    // a later one as well.
    const double stay = 0.3 + 0.7 * rng.uniform();
    auto& u = g.unit(name(i));
    if (i + 2 < n && rng.uniform() < 0.5) {
      const int far = i + 2 + static_cast<int>(rng.below(static_cast<std::size_t>(n - i - 2)));
      const double split = rng.uniform();
      u.successors[name(i + 1)] = stay * split;
      u.successors[name(far)] = stay * (1.0 - split);
    } else {
      u.successors[name(i + 1)] = stay;
    }
  }
  return g;
}

}  // namespace oracle
