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

#include "pdsim/estimator.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <unordered_map>

namespace pdsim {

double RemainingDemand::mean() const {
  if (samples.empty()) throw Error("no data");
  return std::accumulate(samples.begin(), samples.end(), 0.0) /
         static_cast<double>(samples.size());
}

double RemainingDemand::max() const {
  if (samples.empty()) throw Error("no data");
  return *std::max_element(samples.begin(), samples.end());
}

double RemainingDemand::min() const {
  if (samples.empty()) throw Error("no data");
  return *std::min_element(samples.begin(), samples.end());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) throw Error("pearson: need at least two pairs");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error("undefined correlation");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<JoinedRecord> join_records(const FunctionalUnit& unit,
                                       const FunctionalUnit& upstream) {
  auto all_zero = [](const FunctionalUnit& u) {
    return std::all_of(u.records.begin(), u.records.end(),
                       [](const UnitRecord& r) { return r.step == 0; });
  };
  // Knowledge bases written without visit steps join on trial id alone.
  const bool use_steps = !(all_zero(unit) && all_zero(upstream));
  std::unordered_multimap<std::int64_t, const UnitRecord*> by_trial;
  for (const auto& r : upstream.records) {
    if (r.next_unit && *r.next_unit == unit.unit_id) by_trial.emplace(r.trial_id, &r);
  }
  std::vector<JoinedRecord> out;
  for (const auto& r : unit.records) {
    auto [lo, hi] = by_trial.equal_range(r.trial_id);
    for (auto it = lo; it != hi; ++it) {
      if (!use_steps || it->second->step + 1 == r.step) {
        out.push_back({it->second, &r});
        break;
      }
    }
  }
  return out;
}

std::vector<std::string> build_masks(PDGraph& graph, double threshold) {
  std::vector<std::string> warnings;
  for (auto& [id, unit] : graph.units) {
    unit.masks = CorrelationMask{};
    if (!unit.is_llm()) continue;
    std::vector<JoinedRecord> joined;
    for (const auto& pred : graph.predecessors(id)) {
      if (!graph.unit(pred).is_llm()) continue;
      auto part = join_records(unit, graph.unit(pred));
      joined.insert(joined.end(), part.begin(), part.end());
    }
    auto strong = [&](const std::vector<double>& x, const std::vector<double>& y,
                      const char* name) {
      if (x.size() < 2) {
        warnings.push_back("unit '" + id + "': too few joined records for " + name);
        return false;
      }
      try {
        return std::abs(pearson(x, y)) > threshold;
      } catch (const Error& e) {
        warnings.push_back("unit '" + id + "': " + name + ": " + e.what());
        return false;
      }
    };
    std::vector<double> ui, uo, up, di, doo, dp;
    for (const auto& j : joined) {
      ui.push_back(j.upstream->input_len);
      uo.push_back(j.upstream->output_len);
      up.push_back(j.upstream->parallelism);
      di.push_back(j.downstream->input_len);
      doo.push_back(j.downstream->output_len);
      dp.push_back(j.downstream->parallelism);
    }
    unit.masks.input_upstream_input = strong(ui, di, "input/upstream input");
    unit.masks.input_upstream_output = strong(uo, di, "input/upstream output");
    unit.masks.output_upstream_output = strong(uo, doo, "output/upstream output");
    unit.masks.parallelism_upstream = strong(up, dp, "parallelism/upstream parallelism");
    std::vector<double> own_i, own_o;
    for (const auto& r : unit.records) {
      own_i.push_back(r.input_len);
      own_o.push_back(r.output_len);
    }
    unit.masks.output_input = strong(own_i, own_o, "output/input");
  }
  return warnings;
}

ConditionalDemand conditional_filter(const FunctionalUnit& unit,
                                     const Observation& observed,
                                     const FunctionalUnit& upstream,
                                     const FilterOptions& options) {
  ConditionalDemand out{unit.input_dist, unit.output_dist, unit.parallelism_dist,
                        false, false, false, {}};
  if (observed.unit_id != upstream.unit_id) {
    throw Error("observation refers to '" + observed.unit_id +
                "', not upstream unit '" + upstream.unit_id + "'");
  }
  const auto& m = unit.masks;
  if (!m.input_upstream_input && !m.input_upstream_output &&
      !m.output_upstream_output && !m.parallelism_upstream) {
    return out;
  }
  if (!upstream.is_llm()) return out;
  auto joined = join_records(unit, upstream);
  if (joined.empty()) {
    out.diagnostics.push_back("unit '" + unit.unit_id +
                              "': no records joined with '" + upstream.unit_id + "'");
    return out;
  }
  enum Var { kIn, kOut, kPar };
  auto grid_of = [&](Var v) -> const EmpiricalDistribution& {
    switch (v) {
      case kIn: return upstream.input_dist;
      case kOut: return upstream.output_dist;
      default: return upstream.parallelism_dist;
    }
  };
  auto upstream_value = [](const UnitRecord& r, Var v) {
    switch (v) {
      case kIn: return r.input_len;
      case kOut: return r.output_len;
      default: return static_cast<double>(r.parallelism);
    }
  };
  auto observed_value = [&](Var v) {
    switch (v) {
      case kIn: return observed.input_len;
      case kOut: return observed.output_len;
      default: return static_cast<double>(observed.parallelism);
    }
  };
  auto narrow = [&](std::vector<Var> keys, Var target, EmpiricalDistribution& dist,
                    bool& flag, const char* name) {
    if (keys.empty()) return;
    for (Var k : keys) {
      if (grid_of(k).empty()) {
        out.diagnostics.push_back("unit '" + unit.unit_id + "': upstream '" +
                                  upstream.unit_id + "' has no samples to bucket");
        return;
      }
    }
    EmpiricalDistribution kept(std::max<std::size_t>(joined.size(), 1),
                               dist.bucket_count());
    for (const auto& j : joined) {
      bool match = true;
      for (Var k : keys) {
        const auto& g = grid_of(k).grid();
        if (g.index(upstream_value(*j.upstream, k)) != g.index(observed_value(k))) {
          match = false;
          break;
        }
      }
      if (match) kept.add(upstream_value(*j.downstream, target));
    }
    if (kept.size() < std::max<std::size_t>(options.min_conditional_samples, 1)) {
      out.diagnostics.push_back("unit '" + unit.unit_id + "': only " +
                                std::to_string(kept.size()) + " tuples match on " +
                                name + "; using prior");
      return;
    }
    dist = std::move(kept);
    flag = true;
  };
  std::vector<Var> in_keys, out_keys, par_keys;
  if (m.input_upstream_input) in_keys.push_back(kIn);
  if (m.input_upstream_output) in_keys.push_back(kOut);
  if (m.output_upstream_output) out_keys.push_back(kOut);
  if (m.parallelism_upstream) par_keys.push_back(kPar);
  narrow(in_keys, kIn, out.input, out.input_conditioned, "input");
  narrow(out_keys, kOut, out.output, out.output_conditioned, "output");
  narrow(par_keys, kPar, out.parallelism, out.parallelism_conditioned, "parallelism");
  return out;
}

CompiledGraph::CompiledGraph(const PDGraph& graph,
                             std::size_t min_conditional_samples)
    : source_(&graph), min_conditional_(min_conditional_samples) {
  std::map<std::string, int> index;
  for (const auto& [id, _] : graph.units) {
    index.emplace(id, static_cast<int>(index.size()));
  }
  units_.reserve(graph.units.size());
  for (const auto& [id, u] : graph.units) {
    CompiledUnit c;
    c.id = id;
    c.llm = u.is_llm();
    c.input = u.input_dist.to_vector();
    c.output = u.output_dist.to_vector();
    c.parallelism = u.parallelism_dist.to_vector();
    c.duration = u.duration_dist.to_vector();
    c.masks = u.masks;
    if (c.llm && u.masks.output_input && !u.records.empty() && !u.input_dist.empty()) {
      c.input_grid = u.input_dist.grid();
      c.output_given_input.resize(c.input_grid.count);
      for (const auto& r : u.records) {
        c.output_given_input[c.input_grid.index(r.input_len)].push_back(r.output_len);
      }
    }
    double cum = 0.0;
    for (const auto& [succ, p] : u.successors) {
      if (p <= 0.0) continue;
      cum += p;
      c.next.push_back(index.at(succ));
      c.next_cumulative.push_back(cum);
    }
    units_.push_back(std::move(c));
  }
  entry_ = index.at(graph.entry_unit);
}

int CompiledGraph::index_of(const std::string& unit_id) const {
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (units_[i].id == unit_id) return static_cast<int>(i);
  }
  throw Error("unknown unit id '" + unit_id + "'");
}

FirstHop make_first_hop(const ConditionalDemand& demand) {
  FirstHop hop;
  hop.input = demand.input.to_vector();
  hop.output = demand.output.to_vector();
  hop.parallelism = demand.parallelism.to_vector();
  hop.output_conditioned = demand.output_conditioned;
  return hop;
}

namespace {

double draw(const std::vector<double>& values, SplitMix64& rng) {
  if (values.empty()) return 0.0;
  return values[rng.below(values.size())];
}

struct Draw {
  double latency = 0.0;
  int parallelism = 1;
};

Draw sample_visit(const CompiledUnit& unit, const FirstHop* hop,
                  const RateProfile& env, std::size_t min_conditional,
                  SplitMix64& rng) {
  if (!unit.llm) return {draw(unit.duration, rng), 1};
  const auto& in = hop ? hop->input : unit.input;
  const auto& par = hop ? hop->parallelism : unit.parallelism;
  const double p = draw(par, rng);
  const double i = draw(in, rng);
  double o;
  if (hop && hop->output_conditioned) {
    o = draw(hop->output, rng);
  } else if (!unit.output_given_input.empty()) {
    const auto& bucket = unit.output_given_input[unit.input_grid.index(i)];
    o = bucket.size() >= min_conditional ? draw(bucket, rng)
                                          : draw(hop ? hop->output : unit.output, rng);
  } else {
    o = draw(hop ? hop->output : unit.output, rng);
  }
  return {service_time(i, o, env), std::max(1, static_cast<int>(std::lround(p)))};
}

int next_unit(const CompiledUnit& unit, SplitMix64& rng) {
  if (unit.next.empty()) return -1;
  const double u = rng.uniform();
  for (std::size_t k = 0; k < unit.next.size(); ++k) {
    if (u < unit.next_cumulative[k]) return unit.next[k];
  }
  return -1;
}

struct WalkTotals {
  double work = 0.0;
  double latency = 0.0;
};

WalkTotals one_walk(const kernels::WalkJob& job, std::size_t walk, bool& capped) {
  SplitMix64 rng(job.seed, walk);
  const auto& g = *job.graph;
  WalkTotals total;
  int u = job.start;
  int visits = 0;
  capped = false;
  while (u >= 0) {
    if (visits >= job.max_visits) {
      capped = true;
      break;
    }
    const FirstHop* hop = visits == 0 ? job.first_hop : nullptr;
    const auto d = sample_visit(g.unit(u), hop, job.env, g.min_conditional_samples(), rng);
    total.work += d.latency * d.parallelism;
    total.latency += d.latency;
    ++visits;
    u = next_unit(g.unit(u), rng);
  }
  return total;
}

}  // namespace

double sample_unit_demand(const CompiledUnit& unit, const FirstHop* hop,
                          const RateProfile& env, std::size_t min_conditional,
                          SplitMix64& rng) {
  const auto d = sample_visit(unit, hop, env, min_conditional, rng);
  return d.latency * d.parallelism;
}

double sample_unit_latency(const CompiledUnit& unit, const FirstHop* hop,
                           const RateProfile& env, std::size_t min_conditional,
                           SplitMix64& rng) {
  return sample_visit(unit, hop, env, min_conditional, rng).latency;
}

namespace kernels {

std::size_t random_walks_serial(const WalkJob& job, std::span<double> out,
                               std::span<double> latency) {
  if (!latency.empty() && latency.size() != out.size()) {
    throw Error("latency buffer size mismatch");
  }
  std::size_t capped = 0;
  for (std::size_t w = 0; w < out.size(); ++w) {
    bool c = false;
    const auto t = one_walk(job, w, c);
    out[w] = t.work;
    if (!latency.empty()) latency[w] = t.latency;
    capped += c ? 1 : 0;
  }
  return capped;
}

std::size_t random_walks_parallel(const WalkJob& job, std::span<double> out,
                                 std::span<double> latency) {
  if (!latency.empty() && latency.size() != out.size()) {
    throw Error("latency buffer size mismatch");
  }
  const auto n = static_cast<std::int64_t>(out.size());
  std::size_t capped = 0;
#pragma omp parallel for schedule(static) reduction(+ : capped) \
    if (n >= 4096 && !omp_in_parallel())
  for (std::int64_t w = 0; w < n; ++w) {
    bool c = false;
    const auto t = one_walk(job, static_cast<std::size_t>(w), c);
    out[w] = t.work;
    if (!latency.empty()) latency[w] = t.latency;
    capped += c ? 1 : 0;
  }
  return capped;
}

}  // namespace kernels

RemainingDemand monte_carlo_remaining_demand(const CompiledGraph& graph,
                                             int current_unit,
                                             const FirstHop* first_hop,
                                             const RateProfile& env,
                                             const McOptions& options) {
  if (options.n == 0) throw Error("monte carlo sample count must be >= 1");
  if (current_unit < 0 || static_cast<std::size_t>(current_unit) >= graph.size()) {
    throw Error("current unit is not part of the graph");
  }
  kernels::WalkJob job{&graph, current_unit, first_hop, env, options.seed,
                       options.max_visits};
  RemainingDemand out;
  out.samples.resize(options.n);
  out.latency.resize(options.n);
  out.capped_walks = kernels::random_walks_parallel(job, out.samples, out.latency);
  return out;
}

RemainingDemand monte_carlo_remaining_demand(
    const PDGraph& graph, const std::string& current_unit,
    std::span<const Observation> observations, const RateProfile& env,
    const McOptions& options) {
  if (options.n == 0) throw Error("monte carlo sample count must be >= 1");
  const auto& unit = graph.unit(current_unit);
  CompiledGraph compiled(graph, options.min_conditional_samples);
  std::optional<FirstHop> hop;
  bool conditioned = false;
  if (!observations.empty()) {
    const auto& last = observations.back();
    if (graph.contains(last.unit_id) &&
        graph.unit(last.unit_id).successors.count(current_unit)) {
      auto cd = conditional_filter(unit, last, graph.unit(last.unit_id),
                                   {options.min_conditional_samples});
      conditioned = cd.conditioned();
      hop = make_first_hop(cd);
    }
  }
  auto out = monte_carlo_remaining_demand(compiled, compiled.index_of(current_unit),
                                          hop ? &*hop : nullptr, env, options);
  out.conditioned = conditioned;
  return out;
}

double exact_remaining_demand(const PDGraph& graph,
                              const std::string& current_unit,
                              const RateProfile& env) {
  graph.unit(current_unit);
  // Weighted support of a sample list: value -> probability.
  auto support = [](const EmpiricalDistribution& d, const std::string& where) {
    std::map<double, double> s;
    for (double v : d.samples()) s[v] += 1.0;
    if (s.size() > 16) throw Error("support too large at unit '" + where + "'");
    for (auto& [_, w] : s) w /= static_cast<double>(d.size());
    return s;
  };
  auto unit_expectation = [&](const FunctionalUnit& u) {
    if (u.masks.any()) {
      throw Error("exact enumeration does not model correlation flags (unit '" +
                  u.unit_id + "')");
    }
    if (!u.is_llm()) {
      if (u.duration_dist.empty()) return 0.0;
      double e = 0.0;
      for (auto [v, w] : support(u.duration_dist, u.unit_id)) e += v * w;
      return e;
    }
    std::map<double, double> one{{0.0, 1.0}};
    auto par = u.parallelism_dist.empty() ? std::map<double, double>{{1.0, 1.0}}
                                          : support(u.parallelism_dist, u.unit_id);
    auto in = u.input_dist.empty() ? one : support(u.input_dist, u.unit_id);
    auto out = u.output_dist.empty() ? one : support(u.output_dist, u.unit_id);
    double e = 0.0;
    for (auto [p, wp] : par) {
      const double requests = std::max(1.0, std::round(p));
      for (auto [i, wi] : in) {
        for (auto [o, wo] : out) {
          e += wp * wi * wo * requests * (i / env.prefill_rate + o / env.decode_rate);
        }
      }
    }
    return e;
  };
  // Depth-first path enumeration; `on_path` detects cycles.
  std::map<std::string, bool> on_path;
  std::function<double(const std::string&)> expect = [&](const std::string& id) {
    if (on_path[id]) throw Error("cycle detected at unit '" + id + "'");
    on_path[id] = true;
    const auto& u = graph.unit(id);
    double e = unit_expectation(u);
    for (const auto& [succ, p] : u.successors) {
      if (p > 0.0) e += p * expect(succ);
    }
    on_path[id] = false;
    return e;
  };
  return expect(current_unit);
}

}  // namespace pdsim
