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

#include "pdsim/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "pdsim/common.hpp"
#include "pdsim/knowledge_base.hpp"

extern char** environ;

namespace pdsim {

using nlohmann::json;

namespace {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error("config " + path + ": " + what) {}
};

// Typed accessors over one JSON object that remember where it lives.
class Section {
 public:
  Section(const json& obj, std::string path, std::set<std::string> allowed)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
    for (const auto& [k, _] : obj_.items()) {
      if (!allowed.count(k)) throw ConfigError(key_path(k), "unknown key");
    }
  }

  std::string key_path(const std::string& k) const { return path_ + "." + k; }
  bool has(const std::string& k) const {
    return obj_.contains(k) && !obj_.at(k).is_null();
  }
  const json& raw(const std::string& k) const { return obj_.at(k); }

  double number(const std::string& k, double def, double lo = -1e300,
                double hi = 1e300) const {
    if (!has(k)) return def;
    const auto& v = obj_.at(k);
    if (!v.is_number()) throw ConfigError(key_path(k), "expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) {
      throw ConfigError(key_path(k), fmt::format("must be in [{}, {}]", lo, hi));
    }
    return x;
  }
  std::int64_t integer(const std::string& k, std::int64_t def, std::int64_t lo = 0) const {
    if (!has(k)) return def;
    const auto& v = obj_.at(k);
    if (!v.is_number_integer()) throw ConfigError(key_path(k), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < lo) throw ConfigError(key_path(k), fmt::format("must be >= {}", lo));
    return x;
  }
  bool boolean(const std::string& k, bool def) const {
    if (!has(k)) return def;
    const auto& v = obj_.at(k);
    if (!v.is_boolean()) throw ConfigError(key_path(k), "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& k, const std::string& def) const {
    if (!has(k)) return def;
    const auto& v = obj_.at(k);
    if (!v.is_string()) throw ConfigError(key_path(k), "expected a string");
    return v.get<std::string>();
  }
  Section child(const std::string& k, std::set<std::string> allowed) const {
    static const json empty = json::object();
    return Section(has(k) ? obj_.at(k) : empty, key_path(k), std::move(allowed));
  }

 private:
  const json& obj_;
  std::string path_;
};

template <typename F>
auto checked(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ArchetypeParams parse_params(const Section& s, ArchetypeParams p) {
  p.app_id = s.string("app_id", p.app_id);
  p.trials = static_cast<int>(s.integer("trials", p.trials, 1));
  p.length_scale = s.number("length_scale", p.length_scale, 1e-6);
  p.duration_scale = s.number("duration_scale", p.duration_scale, 1e-6);
  p.loop_back = s.number("loop_back", p.loop_back, -1.0, 0.99);
  p.max_iterations = static_cast<int>(s.integer("max_iterations", p.max_iterations, 0));
  p.fan_out = static_cast<int>(s.integer("fan_out", p.fan_out, 1));
  p.copy_offset = s.number("copy_offset", p.copy_offset, 0.0);
  p.model = s.string("model", p.model);
  p.kv_bytes = s.number("kv_bytes", p.kv_bytes, 0.0);
  p.kv_warmup = s.number("kv_warmup", p.kv_warmup, 0.0);
  if (s.has("lora_id")) p.lora_id = s.string("lora_id", "");
  p.lora_bytes = s.number("lora_bytes", p.lora_bytes, 0.0);
  p.lora_warmup = s.number("lora_warmup", p.lora_warmup, 0.0);
  p.docker_warmup = s.number("docker_warmup", p.docker_warmup, 0.0);
  p.dnn_warmup = s.number("dnn_warmup", p.dnn_warmup, 0.0);
  p.correlation_threshold = s.number("correlation_threshold", p.correlation_threshold, 0.0, 1.0);
  return p;
}

const std::set<std::string> kParamKeys{
    "app_id",   "trials",    "length_scale", "duration_scale", "loop_back",
    "fan_out",  "max_iterations", "copy_offset", "model",      "kv_bytes",       "kv_warmup",
    "lora_id",  "lora_bytes", "lora_warmup", "docker_warmup",  "dnn_warmup",
    "correlation_threshold"};

std::vector<AppEntry> default_apps() {
  std::vector<AppEntry> out;
  for (auto k : {ArchetypeKind::VerifyChain, ArchetypeKind::ReactLoop,
                 ArchetypeKind::PlanExecute, ArchetypeKind::CodeCheck,
                 ArchetypeKind::FanoutReduce}) {
    AppEntry e;
    e.kind = k;
    e.size_class = default_size_class(k);
    out.push_back(e);
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  Section root(doc, "$",
               {"policies", "seeds", "workload", "apps", "graph_seed", "env", "scheduler",
                "prewarm", "demand_scale", "output"});

  if (root.has("policies")) {
    const auto& v = root.raw("policies");
    if (!v.is_array() || v.empty()) {
      throw ConfigError("$.policies", "expected a non-empty array");
    }
    cfg.policies.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = fmt::format("$.policies[{}]", i);
      if (!v[i].is_string()) throw ConfigError(p, "expected a string");
      cfg.policies.push_back(checked(p, [&] { return parse_policy(v[i].get<std::string>()); }));
    }
  }
  if (root.has("seeds")) {
    const auto& v = root.raw("seeds");
    if (!v.is_array() || v.empty()) throw ConfigError("$.seeds", "expected a non-empty array");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_unsigned()) {
        throw ConfigError(fmt::format("$.seeds[{}]", i), "expected a non-negative integer");
      }
      cfg.seeds.push_back(v[i].get<std::uint64_t>());
    }
  }
  cfg.graph_seed = static_cast<std::uint64_t>(root.integer("graph_seed", 7));
  cfg.sim.demand_scale = root.number("demand_scale", 1.0, 1e-6);

  // Workload.
  auto w = root.child("workload", {"n_apps", "window", "intensity", "mix", "burst", "tenants",
                                   "trace", "deadlines", "deadline_factors"});
  cfg.generate.n_apps = static_cast<std::size_t>(w.integer("n_apps", 300, 1));
  cfg.generate.window = w.number("window", 900.0, 1e-9);
  cfg.intensity = w.number("intensity", 1.0, 1e-9);
  cfg.generate.tenants = static_cast<std::size_t>(w.integer("tenants", 8, 1));
  if (w.has("mix")) {
    const auto& m = w.raw("mix");
    if (!m.is_object()) throw ConfigError("$.workload.mix", "expected an object");
    cfg.generate.mix.clear();
    for (const auto& [k, v] : m.items()) {
      if (!v.is_number()) throw ConfigError("$.workload.mix." + k, "expected a number");
      cfg.generate.mix[k] = v.get<double>();
    }
    double total = 0.0;
    for (const auto& [k, v] : cfg.generate.mix) {
      if (v < 0) throw ConfigError("$.workload.mix." + k, "weight must be >= 0");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ConfigError("$.workload.mix", "weights must sum to 1");
  }
  auto b = w.child("burst", {"kind", "on_rate_ratio", "mean_on", "mean_off"});
  const std::string kind = b.string("kind", "bursty");
  if (kind == "uniform") {
    cfg.generate.burst.kind = BurstProfile::Kind::Uniform;
  } else if (kind == "bursty") {
    cfg.generate.burst.kind = BurstProfile::Kind::Bursty;
  } else {
    throw ConfigError("$.workload.burst.kind", "expected 'uniform' or 'bursty'");
  }
  cfg.generate.burst.on_rate_ratio = b.number("on_rate_ratio", 8.0, 1e-9);
  cfg.generate.burst.mean_on = b.number("mean_on", 0.05, 1e-9);
  cfg.generate.burst.mean_off = b.number("mean_off", 0.15, 1e-9);
  if (w.has("trace")) cfg.trace = base_dir / w.string("trace", "");
  cfg.deadlines = w.boolean("deadlines", false);
  if (w.has("deadline_factors")) {
    const auto& v = w.raw("deadline_factors");
    if (!v.is_array() || v.empty()) {
      throw ConfigError("$.workload.deadline_factors", "expected a non-empty array");
    }
    cfg.deadline_factors.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      Section f(v[i], fmt::format("$.workload.deadline_factors[{}]", i),
                {"factor", "weight", "label"});
      cfg.deadline_factors.push_back({f.number("factor", 1.0, 1e-9), f.number("weight", 1.0, 0.0),
                                      f.string("label", "")});
    }
  }

  // Applications.
  if (root.has("apps")) {
    const auto& v = root.raw("apps");
    if (!v.is_array() || v.empty()) throw ConfigError("$.apps", "expected a non-empty array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = fmt::format("$.apps[{}]", i);
      Section a(v[i], p, {"archetype", "kb", "class", "variants", "params"});
      AppEntry e;
      if (a.has("archetype") == a.has("kb")) {
        throw ConfigError(p, "exactly one of 'archetype' or 'kb' is required");
      }
      if (a.has("archetype")) {
        e.kind = checked(p + ".archetype",
                         [&] { return parse_archetype(a.string("archetype", "")); });
        e.size_class = default_size_class(*e.kind);
      } else {
        e.kb_file = base_dir / a.string("kb", "");
      }
      e.size_class = a.string("class", e.size_class);
      if (e.size_class.empty()) throw ConfigError(p + ".class", "missing size class");
      e.variants = static_cast<int>(a.integer("variants", 1, 1));
      e.params = parse_params(a.child("params", kParamKeys), e.params);
      cfg.apps.push_back(std::move(e));
    }
  } else {
    cfg.apps = default_apps();
  }

  // Environment.
  auto env = root.child("env", {"engines", "pools"});
  if (env.has("engines")) {
    const auto& v = env.raw("engines");
    if (!v.is_array() || v.empty()) throw ConfigError("$.env.engines", "expected a non-empty array");
    cfg.sim.env.engines.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = fmt::format("$.env.engines[{}]", i);
      Section e(v[i], p,
                {"id", "slots", "prefill_rate", "decode_rate", "cache_capacity", "cache_policy",
                 "models"});
      EngineConfig ec;
      ec.id = e.string("id", fmt::format("engine-{}", i));
      ec.slots = static_cast<int>(e.integer("slots", 8, 1));
      ec.rates.prefill_rate = e.number("prefill_rate", 10000.0, 1e-9);
      ec.rates.decode_rate = e.number("decode_rate", 50.0, 1e-9);
      ec.cache_capacity = e.number("cache_capacity", 0.0, 0.0);
      ec.cache_policy = checked(p + ".cache_policy",
                                [&] { return parse_cache_policy(e.string("cache_policy", "lru")); });
      if (e.has("models")) {
        const auto& m = e.raw("models");
        if (!m.is_array()) throw ConfigError(p + ".models", "expected an array");
        for (const auto& x : m) {
          if (!x.is_string()) throw ConfigError(p + ".models", "expected strings");
          ec.models.push_back(x.get<std::string>());
        }
      }
      cfg.sim.env.engines.push_back(std::move(ec));
    }
  }
  if (env.has("pools")) {
    const auto& v = env.raw("pools");
    if (!v.is_object()) throw ConfigError("$.env.pools", "expected an object");
    for (const auto& [k, pv] : v.items()) {
      const std::string p = "$.env.pools." + k;
      const BackendKind bk = checked(p, [&] { return parse_backend_kind(k); });
      Section s(pv, p, {"pool_size", "keep_alive"});
      cfg.sim.env.pools[bk] = {static_cast<int>(s.integer("pool_size", 0, 0)),
                               s.number("keep_alive", 0.0, 0.0)};
    }
  }

  // Scheduler and prewarming.
  auto s = root.child("scheduler", {"bucket_count", "mc_samples", "max_visits", "refinement",
                                    "preemption", "hysteresis", "preempt_margin",
                                    "overrun_penalty", "min_conditional_samples"});
  auto& sc = cfg.sim.scheduler;
  sc.bucket_count = static_cast<std::size_t>(s.integer("bucket_count", 10, 1));
  sc.mc_samples = static_cast<std::size_t>(s.integer("mc_samples", 1000, 1));
  sc.max_visits = static_cast<int>(s.integer("max_visits", 64, 1));
  sc.refinement = s.boolean("refinement", true);
  sc.preemption = s.boolean("preemption", true);
  sc.hysteresis = s.number("hysteresis", 1.5, 1.0);
  sc.preempt_margin = s.number("preempt_margin", 1.0, 0.0);
  sc.overrun_penalty = s.number("overrun_penalty", 2.0, 1e-9);
  sc.min_conditional_samples =
      static_cast<std::size_t>(s.integer("min_conditional_samples", 5, 1));

  auto pw = root.child("prewarm", {"enabled", "knob", "completion_samples"});
  cfg.sim.prewarm.enabled = pw.boolean("enabled", true);
  cfg.sim.prewarm.knob = pw.number("knob", 0.5, 0.0, 1.0);
  cfg.sim.prewarm.completion_samples =
      static_cast<std::size_t>(pw.integer("completion_samples", 200, 1));

  if (!cfg.deadlines) {
    for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
      if (cfg.policies[i] == Policy::Lstf || cfg.policies[i] == Policy::Edf) {
        throw ConfigError(fmt::format("$.policies[{}]", i),
                          "needs \"workload.deadlines\": true");
      }
    }
  }

  auto out = root.child("output", {"dir", "event_log"});
  cfg.out_dir = base_dir / out.string("dir", "results");
  cfg.sim.event_log = out.boolean("event_log", false);

  json identity{{"workload", doc.value("workload", json::object())},
                {"apps", doc.value("apps", json())},
                {"graph_seed", cfg.graph_seed},
                {"demand_scale", cfg.sim.demand_scale}};
  cfg.workload_id = fmt::format("{:016x}", fnv1a(identity.dump()));
  return cfg;
}

std::map<std::string, std::string> pdsim_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string kv(*e);
    if (kv.rfind("PDSIM_", 0) != 0) continue;
    auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

void apply_env_overrides(json& doc, const std::map<std::string, std::string>& env) {
  for (const auto& [name, value] : env) {
    if (name.rfind("PDSIM_", 0) != 0) continue;
    std::string rest = name.substr(6);
    std::vector<std::string> keys;
    for (std::size_t pos = 0;;) {
      auto next = rest.find("__", pos);
      std::string k = rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      std::transform(k.begin(), k.end(), k.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (k.empty()) throw Error("malformed override " + name);
      keys.push_back(k);
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    json* node = &doc;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
      if (!node->is_object()) throw Error("override " + name + " does not address an object");
      node = &(*node)[keys[i]];
      if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw Error("override " + name + " does not address an object");
    json parsed = json::parse(value, nullptr, false);
    (*node)[keys.back()] = parsed.is_discarded() ? json(value) : parsed;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str(), nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  apply_env_overrides(doc, pdsim_environment());
  return parse_config(doc, path.parent_path());
}

Catalog build_catalog(const ExperimentConfig& cfg) {
  Catalog c;
  for (std::size_t i = 0; i < cfg.apps.size(); ++i) {
    const AppEntry& e = cfg.apps[i];
    for (int v = 0; v < e.variants; ++v) {
      PDGraph g;
      if (e.kind) {
        ArchetypeParams p = e.params;
        std::string base = p.app_id.empty() ? to_string(*e.kind) : p.app_id;
        p.app_id = e.variants > 1 ? fmt::format("{}-{}", base, v) : base;
        g = archetype(*e.kind, p, derive_seed(cfg.graph_seed, i, static_cast<std::uint64_t>(v)));
      } else {
        g = load_knowledge_base(*e.kb_file);
        if (e.variants > 1) g.app_id = fmt::format("{}-{}", g.app_id, v);
      }
      if (c.graphs.count(g.app_id)) throw Error("duplicate application id '" + g.app_id + "'");
      c.classes[e.size_class].push_back(g.app_id);
      c.graphs.emplace(g.app_id, std::move(g));
    }
  }
  return c;
}

WorkloadSpec build_workload(const ExperimentConfig& cfg, const Catalog& catalog,
                            std::uint64_t seed) {
  WorkloadSpec w;
  if (cfg.trace) {
    w = ingest_trace(*cfg.trace, cfg.generate.mix, catalog.classes, seed);
  } else {
    GenerateParams gp = cfg.generate;
    gp.window = cfg.generate.window / cfg.intensity;
    gp.seed = seed;
    w = generate(gp, catalog.classes);
  }
  w.deadline_factors = cfg.deadline_factors;
  if (cfg.deadlines) {
    auto runs = draw_true_runs(w, catalog.graphs, seed, cfg.sim.demand_scale);
    std::vector<double> standalone;
    for (const auto& r : runs) {
      standalone.push_back(standalone_time(r, cfg.sim.env.reference_rates()));
    }
    assign_deadlines(w, standalone, cfg.deadline_factors, seed);
  }
  return w;
}

CellResult run_cell(const ExperimentConfig& cfg, const Catalog& catalog,
                    const WorkloadSpec& workload, Policy policy, std::uint64_t seed) {
  SimConfig sc = cfg.sim;
  sc.scheduler.policy = policy;
  sc.seed = seed;
  CellResult r;
  r.policy = policy;
  r.seed = seed;
  r.raw = simulate(workload, catalog.graphs, sc);
  r.metrics = compute_metrics(r.raw);
  return r;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

json cell_stats(const Metrics& m) {
  const auto& a = m.aggregates;
  return {{"apps", a.apps},
          {"mean_act", a.mean_act},
          {"p50", a.p50},
          {"p95", a.p95},
          {"dsr_overall", a.dsr_overall ? json(*a.dsr_overall) : json(nullptr)},
          {"cache_hits", a.cache_hits},
          {"cache_accesses", a.cache_accesses},
          {"cache_hit_ratio", a.cache_hit_ratio},
          {"latency_saved", a.latency_saved},
          {"wasted_backend_time", a.wasted_backend_time}};
}

json pooled_stats(const std::vector<const Metrics*>& cells) {
  std::vector<double> acts;
  std::size_t met = 0, with_deadline = 0, hits = 0, accesses = 0;
  double saved = 0.0, wasted = 0.0, sum = 0.0;
  for (const Metrics* m : cells) {
    for (const auto& r : m->apps) {
      acts.push_back(r.act);
      sum += r.act;
      if (r.met) {
        ++with_deadline;
        met += *r.met ? 1 : 0;
      }
    }
    hits += m->aggregates.cache_hits;
    accesses += m->aggregates.cache_accesses;
    saved += m->aggregates.latency_saved;
    wasted += m->aggregates.wasted_backend_time;
  }
  std::sort(acts.begin(), acts.end());
  return {{"apps", acts.size()},
          {"mean_act", acts.empty() ? 0.0 : sum / static_cast<double>(acts.size())},
          {"p50", percentile(acts, 0.5)},
          {"p95", percentile(acts, 0.95)},
          {"dsr_overall", with_deadline ? json(static_cast<double>(met) /
                                                static_cast<double>(with_deadline))
                                         : json(nullptr)},
          {"cache_hits", hits},
          {"cache_accesses", accesses},
          {"cache_hit_ratio",
           accesses ? static_cast<double>(hits) / static_cast<double>(accesses) : 0.0},
          {"latency_saved", saved},
          {"wasted_backend_time", wasted}};
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const Catalog catalog = build_catalog(cfg);
  std::vector<WorkloadSpec> workloads;
  for (auto seed : cfg.seeds) workloads.push_back(build_workload(cfg, catalog, seed));

  struct Cell {
    Policy policy;
    std::size_t seed_index;
    CellResult result;
  };
  std::vector<Cell> cells;
  for (Policy p : cfg.policies) {
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) cells.push_back({p, s, {}});
  }
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      auto& c = cells[i];
      c.result = run_cell(cfg, catalog, workloads[c.seed_index], c.policy,
                          cfg.seeds[c.seed_index]);
    } catch (...) {
#pragma omp critical(pdsim_experiment_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentSummary summary;
  json runs = json::array();
  std::string csv =
      "policy,seed,apps,mean_act,p50,p95,dsr_overall,cache_hit_ratio,latency_saved,"
      "wasted_backend_time\n";
  for (Policy p : cfg.policies) {
    json per_seed = json::object();
    std::vector<const Metrics*> mine;
    for (const auto& c : cells) {
      if (c.policy != p) continue;
      const auto seed = cfg.seeds[c.seed_index];
      const std::string stem = fmt::format("{}-seed{}", to_string(p), seed);
      const auto& m = c.result.metrics;
      auto write = [&](const std::string& suffix, const std::string& body) {
        const auto path = cfg.out_dir / (stem + suffix);
        write_atomic(path, body);
        summary.files.push_back(path);
      };
      write(".metrics.json", to_json(m).dump(2) + "\n");
      write(".cdf.csv", cdf_csv(m));
      const auto& raw = c.result.raw;
      json timing{{"refreshes", raw.refreshes},
                  {"refresh_wall_ns", raw.refresh_wall_ns},
                  {"mean_policy_runtime_ns",
                   raw.refreshes ? raw.refresh_wall_ns / static_cast<double>(raw.refreshes)
                                 : 0.0}};
      write(".timing.json", timing.dump(2) + "\n");
      if (cfg.sim.event_log) write(".events.log", raw.event_log);
      per_seed[std::to_string(seed)] = cell_stats(m);
      mine.push_back(&m);
      const auto& a = m.aggregates;
      csv += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{},{:.6f},{:.6f},{:.6f}\n", to_string(p),
                         seed, a.apps, a.mean_act, a.p50, a.p95,
                         a.dsr_overall ? fmt::format("{:.6f}", *a.dsr_overall) : "",
                         a.cache_hit_ratio, a.latency_saved, a.wasted_backend_time);
    }
    runs.push_back({{"policy", to_string(p)}, {"per_seed", per_seed}, {"pooled", pooled_stats(mine)}});
  }
  summary.doc = {{"workload_id", cfg.workload_id}, {"seeds", cfg.seeds}, {"runs", runs}};
  const auto sj = cfg.out_dir / "summary.json";
  const auto sc = cfg.out_dir / "summary.csv";
  write_atomic(sj, summary.doc.dump(2) + "\n");
  write_atomic(sc, csv);
  summary.files.push_back(sj);
  summary.files.push_back(sc);
  return summary;
}

namespace {

json relative(const json& base, const json& other) {
  auto ratio_drop = [&](const char* k) -> json {
    const double b = base.at(k).get<double>();
    const double o = other.at(k).get<double>();
    if (b == 0.0) return nullptr;
    return (b - o) / b;
  };
  json r{{"mean_act_reduction", ratio_drop("mean_act")},
         {"p50_reduction", ratio_drop("p50")},
         {"p95_reduction", ratio_drop("p95")}};
  if (!base.at("dsr_overall").is_null() && !other.at("dsr_overall").is_null()) {
    r["dsr_gain"] = other.at("dsr_overall").get<double>() - base.at("dsr_overall").get<double>();
  }
  const double bh = base.at("cache_hit_ratio").get<double>();
  if (bh > 0) r["cache_hit_ratio_gain"] = other.at("cache_hit_ratio").get<double>() / bh;
  return r;
}

}  // namespace

json compare(const std::vector<json>& summaries) {
  if (summaries.size() < 1) throw Error("compare needs at least one summary");
  struct Run {
    std::string label;
    const json* doc;
  };
  std::vector<Run> runs;
  std::string id;
  std::set<std::string> common;
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const json& s = summaries[i];
    if (!s.contains("workload_id") || !s.contains("runs")) {
      throw Error(fmt::format("summary {} is malformed", i));
    }
    const auto sid = s.at("workload_id").get<std::string>();
    if (i == 0) {
      id = sid;
    } else if (sid != id) {
      throw Error(fmt::format("summary {} was produced on a different workload", i));
    }
    for (const auto& r : s.at("runs")) {
      std::set<std::string> seeds;
      for (const auto& [k, _] : r.at("per_seed").items()) seeds.insert(k);
      if (runs.empty()) {
        common = seeds;
      } else {
        std::set<std::string> both;
        for (const auto& k : seeds) {
          if (common.count(k)) both.insert(k);
        }
        common = std::move(both);
      }
      runs.push_back({fmt::format("{}#{}", r.at("policy").get<std::string>(), i), &r});
    }
  }
  if (runs.size() < 2) throw Error("compare needs at least two runs");
  if (common.empty()) throw Error("summaries share no seeds");
  const json& base = *runs.front().doc;
  json out{{"workload_id", id}, {"baseline", runs.front().label}, {"comparisons", json::array()}};
  for (std::size_t k = 1; k < runs.size(); ++k) {
    const json& other = *runs[k].doc;
    json per_seed = json::object();
    for (const auto& seed : common) {
      per_seed[seed] = relative(base.at("per_seed").at(seed), other.at("per_seed").at(seed));
    }
    out["comparisons"].push_back({{"run", runs[k].label},
                                  {"per_seed", per_seed},
                                  {"pooled", relative(base.at("pooled"), other.at("pooled"))}});
  }
  return out;
}

std::string compare_table(const json& report) {
  std::string out = fmt::format("baseline: {}\n{:<24} {:>12} {:>12} {:>12}\n",
                                report.at("baseline").get<std::string>(), "run",
                                "mean_act", "p95", "dsr_gain");
  for (const auto& c : report.at("comparisons")) {
    const auto& p = c.at("pooled");
    auto pct = [](const json& v) {
      return v.is_null() ? std::string("-") : fmt::format("{:.1f}%", 100.0 * v.get<double>());
    };
    out += fmt::format("{:<24} {:>12} {:>12} {:>12}\n", c.at("run").get<std::string>(),
                       pct(p.at("mean_act_reduction")), pct(p.at("p95_reduction")),
                       p.contains("dsr_gain") ? pct(p.at("dsr_gain")) : std::string("-"));
  }
  return out;
}

}  // namespace pdsim
