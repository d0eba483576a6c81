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

#include "pdsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pdsim/common.hpp"

namespace pdsim {

using nlohmann::json;

std::vector<DeadlineFactor> default_deadline_factors() {
  return {{1.2, 1.0 / 3.0, "tight"}, {1.5, 1.0 / 3.0, "modest"}, {2.0, 1.0 / 3.0, "loose"}};
}

std::map<std::string, double> default_mix() {
  return {{"small", 0.72}, {"medium", 0.26}, {"large", 0.02}};
}

namespace {

void validate_mix(const std::map<std::string, double>& mix) {
  if (mix.empty()) throw Error("mix is empty");
  double total = 0.0;
  for (const auto& [cls, w] : mix) {
    if (!std::isfinite(w) || w < 0) throw Error("mix weight of '" + cls + "' is invalid");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw Error("mix weights must sum to 1");
}

void check_catalog(const std::map<std::string, double>& mix, const AppCatalog& catalog) {
  for (const auto& [cls, w] : mix) {
    if (w <= 0) continue;
    auto it = catalog.find(cls);
    if (it == catalog.end() || it->second.empty()) {
      throw Error("no application available for class '" + cls + "'");
    }
  }
}

std::string draw_class(const std::map<std::string, double>& mix, SplitMix64& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  std::string last;
  for (const auto& [cls, w] : mix) {
    if (w <= 0) continue;
    acc += w;
    last = cls;
    if (u < acc) return cls;
  }
  return last;
}

double exponential(SplitMix64& rng, double mean) {
  return -mean * std::log1p(-rng.uniform());
}

std::vector<double> uniform_times(std::size_t n, double window, SplitMix64& rng) {
  std::vector<double> t(n);
  for (double& x : t) x = rng.uniform() * window;
  std::sort(t.begin(), t.end());
  return t;
}

std::vector<double> bursty_times(std::size_t n, double window, const BurstProfile& b,
                                 SplitMix64& rng) {
  if (b.on_rate_ratio <= 0 || b.mean_on <= 0 || b.mean_off <= 0) {
    throw Error("burst profile parameters must be positive");
  }
  const double on = b.mean_on * window;
  const double off = b.mean_off * window;
  // Off-state rate chosen so the long-run average rate is n / window.
  const double off_rate = static_cast<double>(n) / window * (on + off) /
                          (b.on_rate_ratio * on + off);
  const double on_rate = b.on_rate_ratio * off_rate;
  std::vector<double> t;
  t.reserve(n);
  double now = 0.0;
  bool in_on = rng.uniform() < on / (on + off);
  while (t.size() < n) {
    const double stay = exponential(rng, in_on ? on : off);
    const double rate = in_on ? on_rate : off_rate;
    double x = now + exponential(rng, 1.0 / rate);
    while (x < now + stay && t.size() < n) {
      t.push_back(x);
      x += exponential(rng, 1.0 / rate);
    }
    now += stay;
    in_on = !in_on;
  }
  const double scale = t.back() > 0 ? window / t.back() : 1.0;
  for (double& x : t) x = std::min(window, x * scale);
  return t;
}

}  // namespace

void WorkloadSpec::validate() const {
  validate_mix(mix);
  if (!(window >= 0)) throw Error("window must be non-negative");
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    const Arrival& a = arrivals[i];
    if (!(a.time >= 0)) throw Error("arrival " + std::to_string(i) + " has negative time");
    if (i > 0 && a.time < arrivals[i - 1].time) throw Error("arrivals are not sorted");
    if (a.deadline && !(*a.deadline > a.time)) {
      throw Error("arrival " + std::to_string(i) + " has a deadline before its arrival");
    }
  }
  for (const DeadlineFactor& f : deadline_factors) {
    if (!(f.factor > 0) || !(f.weight >= 0)) throw Error("invalid deadline factor");
  }
}

WorkloadSpec generate(const GenerateParams& params, const AppCatalog& catalog) {
  if (params.n_apps < 1) throw Error("n_apps must be at least 1");
  if (!(params.window > 0)) throw Error("window must be positive");
  if (params.tenants < 1) throw Error("tenants must be at least 1");
  validate_mix(params.mix);
  check_catalog(params.mix, catalog);

  SplitMix64 time_rng(params.seed, 1);
  SplitMix64 class_rng(params.seed, 2);
  std::vector<double> times =
      params.burst.kind == BurstProfile::Kind::Uniform
          ? uniform_times(params.n_apps, params.window, time_rng)
          : bursty_times(params.n_apps, params.window, params.burst, time_rng);

  WorkloadSpec spec;
  spec.mix = params.mix;
  spec.window = params.window;
  spec.seed = params.seed;
  spec.deadline_factors = default_deadline_factors();
  spec.arrivals.reserve(times.size());
  for (double t : times) {
    Arrival a;
    a.time = t;
    a.size_class = draw_class(params.mix, class_rng);
    const auto& apps = catalog.at(a.size_class);
    a.app_id = apps[class_rng.below(apps.size())];
    a.tenant_id = "tenant-" + std::to_string(class_rng.below(params.tenants));
    spec.arrivals.push_back(std::move(a));
  }
  return spec;
}

void assign_deadlines(WorkloadSpec& spec, std::span<const double> standalone,
                      std::span<const DeadlineFactor> factors, std::uint64_t seed) {
  if (standalone.size() != spec.arrivals.size()) {
    throw Error("standalone times do not match the arrivals");
  }
  if (factors.empty()) throw Error("no deadline factors");
  double total = 0.0;
  for (const auto& f : factors) {
    if (!(f.factor > 0) || !(f.weight >= 0)) throw Error("invalid deadline factor");
    total += f.weight;
  }
  if (!(total > 0)) throw Error("deadline factor weights sum to zero");
  SplitMix64 rng(seed, 3);
  for (std::size_t i = 0; i < spec.arrivals.size(); ++i) {
    double u = rng.uniform() * total;
    const DeadlineFactor* pick = &factors.back();
    double acc = 0.0;
    for (const auto& f : factors) {
      acc += f.weight;
      if (f.weight > 0 && u < acc) {
        pick = &f;
        break;
      }
    }
    Arrival& a = spec.arrivals[i];
    a.deadline = a.time + pick->factor * standalone[i];
    a.deadline_class = pick->label;
  }
  spec.deadline_factors.assign(factors.begin(), factors.end());
}

WorkloadSpec ingest_trace(const std::filesystem::path& path,
                          const std::map<std::string, double>& mix,
                          const AppCatalog& catalog, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace " + path.string());
  validate_mix(mix);
  check_catalog(mix, catalog);

  SplitMix64 rng(seed, 4);
  WorkloadSpec spec;
  spec.mix = mix;
  spec.seed = seed;
  spec.deadline_factors = default_deadline_factors();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(where + "malformed record");
    }
    if (!rec.is_object()) throw Error(where + "expected an object");
    auto t = rec.find("t");
    if (t == rec.end() || !t->is_number()) throw Error(where + "missing numeric 't'");
    Arrival a;
    a.time = t->get<double>();
    if (!std::isfinite(a.time) || a.time < 0) throw Error(where + "negative timestamp");
    if (auto c = rec.find("class"); c != rec.end()) {
      if (!c->is_string()) throw Error(where + "'class' must be a string");
      a.size_class = c->get<std::string>();
      auto it = catalog.find(a.size_class);
      if (it == catalog.end() || it->second.empty()) {
        throw Error(where + "unknown class '" + a.size_class + "'");
      }
    } else {
      a.size_class = draw_class(mix, rng);
    }
    if (auto tn = rec.find("tenant"); tn != rec.end()) {
      if (!tn->is_string()) throw Error(where + "'tenant' must be a string");
      a.tenant_id = tn->get<std::string>();
    } else {
      a.tenant_id = "tenant-0";
    }
    const auto& apps = catalog.at(a.size_class);
    a.app_id = apps[rng.below(apps.size())];
    spec.arrivals.push_back(std::move(a));
  }
  std::stable_sort(spec.arrivals.begin(), spec.arrivals.end(),
                   [](const Arrival& x, const Arrival& y) { return x.time < y.time; });
  spec.window = spec.arrivals.empty() ? 0.0 : spec.arrivals.back().time;
  return spec;
}

json to_json(const WorkloadSpec& spec) {
  json arrivals = json::array();
  for (const Arrival& a : spec.arrivals) {
    json r{{"time", a.time}, {"app_id", a.app_id}, {"tenant_id", a.tenant_id},
           {"class", a.size_class}};
    if (a.deadline) {
      r["deadline"] = *a.deadline;
      r["deadline_class"] = a.deadline_class;
    }
    arrivals.push_back(std::move(r));
  }
  json factors = json::array();
  for (const auto& f : spec.deadline_factors) {
    factors.push_back({{"factor", f.factor}, {"weight", f.weight}, {"label", f.label}});
  }
  return {{"window", spec.window}, {"seed", spec.seed}, {"mix", spec.mix},
          {"deadline_factors", factors}, {"arrivals", arrivals}};
}

WorkloadSpec workload_from_json(const json& doc) {
  WorkloadSpec spec;
  try {
    spec.window = doc.at("window").get<double>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    spec.mix = doc.at("mix").get<std::map<std::string, double>>();
    for (const auto& f : doc.at("deadline_factors")) {
      spec.deadline_factors.push_back({f.at("factor").get<double>(),
                                       f.at("weight").get<double>(),
                                       f.value("label", std::string{})});
    }
    for (const auto& r : doc.at("arrivals")) {
      Arrival a;
      a.time = r.at("time").get<double>();
      a.app_id = r.at("app_id").get<std::string>();
      a.tenant_id = r.at("tenant_id").get<std::string>();
      a.size_class = r.value("class", std::string{});
      if (r.contains("deadline")) {
        a.deadline = r.at("deadline").get<double>();
        a.deadline_class = r.value("deadline_class", std::string{});
      }
      spec.arrivals.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed workload: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace pdsim
