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

#include "pdsim/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pdsim/common.hpp"

namespace pdsim {

using nlohmann::json;

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (!(q > 0 && q <= 1)) throw Error("percentile must be in (0, 1]");
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::max<std::size_t>(rank, 1) - 1];
}

namespace {

Aggregates aggregate(const std::vector<AppMetrics>& apps) {
  Aggregates a;
  a.apps = apps.size();
  if (apps.empty()) return a;
  std::vector<double> acts;
  std::map<std::string, std::pair<double, std::size_t>> by_size;
  std::map<std::string, std::pair<std::size_t, std::size_t>> by_class;
  std::size_t with_deadline = 0, met = 0;
  for (const auto& r : apps) {
    acts.push_back(r.act);
    auto& s = by_size[r.size_class];
    s.first += r.act;
    ++s.second;
    if (r.overrun) ++a.overruns;
    if (r.met) {
      ++with_deadline;
      met += *r.met ? 1 : 0;
      auto& c = by_class[r.deadline_class];
      ++c.first;
      c.second += *r.met ? 1 : 0;
    }
  }
  double sum = 0.0;
  for (double x : acts) sum += x;
  a.mean_act = sum / static_cast<double>(acts.size());
  std::sort(acts.begin(), acts.end());
  a.p50 = percentile(acts, 0.5);
  a.p95 = percentile(acts, 0.95);
  for (const auto& [k, v] : by_size) {
    a.mean_act_by_size[k] = v.first / static_cast<double>(v.second);
  }
  if (with_deadline > 0) {
    a.dsr_overall = static_cast<double>(met) / static_cast<double>(with_deadline);
    for (const auto& [k, v] : by_class) {
      a.dsr_by_class[k] = static_cast<double>(v.second) / static_cast<double>(v.first);
    }
  }
  return a;
}

std::vector<std::pair<double, double>> make_cdf(const std::vector<AppMetrics>& apps) {
  std::vector<double> acts;
  for (const auto& r : apps) acts.push_back(r.act);
  std::sort(acts.begin(), acts.end());
  std::vector<std::pair<double, double>> cdf;
  const auto n = static_cast<double>(acts.size());
  for (std::size_t i = 0; i < acts.size(); ++i) {
    cdf.emplace_back(acts[i], static_cast<double>(i + 1) / n);
  }
  return cdf;
}

}  // namespace

Metrics compute_metrics(const SimResult& result) {
  Metrics m;
  for (const auto& o : result.apps) {
    AppMetrics r;
    r.id = o.id;
    r.app_id = o.app_id;
    r.size_class = o.size_class;
    r.arrival = o.arrival;
    r.completion = o.completion;
    r.act = o.completion - o.arrival;
    r.deadline = o.deadline;
    r.deadline_class = o.deadline_class;
    if (o.deadline) r.met = o.completion <= *o.deadline;
    r.overrun = o.overrun;
    m.apps.push_back(std::move(r));
  }
  m.aggregates = aggregate(m.apps);
  auto& a = m.aggregates;
  a.cache_hits = result.cache_hits;
  a.cache_accesses = result.cache_accesses;
  a.cache_hit_ratio = result.cache_accesses
                          ? static_cast<double>(result.cache_hits) /
                                static_cast<double>(result.cache_accesses)
                          : 0.0;
  a.latency_saved = result.wastage.latency_saved;
  a.wasted_backend_time = result.wastage.wasted_backend_time;
  a.prewarm_plans = result.wastage.plans;
  a.preemptions = result.preemptions;
  a.events = result.events;
  m.cdf = make_cdf(m.apps);
  return m;
}

json to_json(const Metrics& m) {
  json apps = json::array();
  for (const auto& r : m.apps) {
    json j{{"id", r.id},         {"app_id", r.app_id},         {"class", r.size_class},
           {"arrival", r.arrival}, {"completion", r.completion}, {"act", r.act},
           {"overrun", r.overrun}};
    if (r.deadline) {
      j["deadline"] = *r.deadline;
      j["deadline_class"] = r.deadline_class;
      j["met"] = *r.met;
    }
    apps.push_back(std::move(j));
  }
  const auto& a = m.aggregates;
  json agg{{"apps", a.apps},
           {"mean_act", a.mean_act},
           {"p50", a.p50},
           {"p95", a.p95},
           {"dsr_overall", a.dsr_overall ? json(*a.dsr_overall) : json(nullptr)},
           {"dsr_by_class", a.dsr_by_class},
           {"mean_act_by_size", a.mean_act_by_size},
           {"cache_hits", a.cache_hits},
           {"cache_accesses", a.cache_accesses},
           {"cache_hit_ratio", a.cache_hit_ratio},
           {"latency_saved", a.latency_saved},
           {"wasted_backend_time", a.wasted_backend_time},
           {"prewarm_plans", a.prewarm_plans},
           {"preemptions", a.preemptions},
           {"overruns", a.overruns},
           {"events", a.events}};
  json cdf = json::array();
  for (const auto& [x, f] : m.cdf) cdf.push_back({x, f});
  return {{"aggregates", agg}, {"apps", apps}, {"cdf", cdf}};
}

Metrics metrics_from_json(const json& doc) {
  Metrics m;
  try {
    for (const auto& j : doc.at("apps")) {
      AppMetrics r;
      r.id = j.at("id").get<std::uint64_t>();
      r.app_id = j.at("app_id").get<std::string>();
      r.size_class = j.value("class", std::string{});
      r.arrival = j.at("arrival").get<double>();
      r.completion = j.at("completion").get<double>();
      r.act = j.at("act").get<double>();
      r.overrun = j.value("overrun", false);
      if (j.contains("deadline")) {
        r.deadline = j.at("deadline").get<double>();
        r.deadline_class = j.value("deadline_class", std::string{});
        r.met = j.at("met").get<bool>();
      }
      m.apps.push_back(std::move(r));
    }
    const auto& a = doc.at("aggregates");
    m.aggregates = aggregate(m.apps);
    auto& g = m.aggregates;
    g.cache_hits = a.value("cache_hits", std::size_t{0});
    g.cache_accesses = a.value("cache_accesses", std::size_t{0});
    g.cache_hit_ratio = a.value("cache_hit_ratio", 0.0);
    g.latency_saved = a.value("latency_saved", 0.0);
    g.wasted_backend_time = a.value("wasted_backend_time", 0.0);
    g.prewarm_plans = a.value("prewarm_plans", std::size_t{0});
    g.preemptions = a.value("preemptions", std::size_t{0});
    g.events = a.value("events", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error(std::string("malformed metrics: ") + e.what());
  }
  m.cdf = make_cdf(m.apps);
  return m;
}

std::string cdf_csv(const Metrics& m) {
  std::string out = "act,fraction\n";
  for (const auto& [x, f] : m.cdf) out += fmt::format("{:.9f},{:.9f}\n", x, f);
  return out;
}

}  // namespace pdsim
