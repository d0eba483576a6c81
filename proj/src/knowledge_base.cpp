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

#include "pdsim/knowledge_base.hpp"

#include <fstream>

#include "pdsim/common.hpp"

namespace pdsim {

using nlohmann::json;

namespace {

class PathError : public Error {
 public:
  PathError(const std::string& path, const std::string& what)
      : Error(path + ": " + what) {}
};

const json& field(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw PathError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw PathError(path + "." + key, "missing field");
  return *it;
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw PathError(path, "expected a string");
  return v.get<std::string>();
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw PathError(path, "expected a number");
  return v.get<double>();
}

std::optional<std::string> opt_string(const json& obj, const char* key,
                                      const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return get_string(*it, path + "." + key);
}

void load_samples(const json& obj, const char* key, const std::string& path,
                  EmpiricalDistribution& dist) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string p = path + "." + key;
  if (!it->is_array()) throw PathError(p, "expected an array");
  if (it->size() > dist.capacity()) throw PathError(p, "exceeds capacity");
  for (std::size_t i = 0; i < it->size(); ++i) {
    const std::string ip = p + "[" + std::to_string(i) + "]";
    double v = get_number((*it)[i], ip);
    if (v < 0) throw PathError(ip, "samples must be non-negative");
    dist.add(v);
  }
}

json samples_json(const EmpiricalDistribution& d) {
  json arr = json::array();
  for (double v : d.samples()) arr.push_back(v);
  return arr;
}

}  // namespace

json to_json(const BackendSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  if (spec.model_id) j["model_id"] = *spec.model_id;
  if (spec.lora_id) j["lora_id"] = *spec.lora_id;
  if (spec.kv_prefix_id) j["kv_prefix_id"] = *spec.kv_prefix_id;
  if (spec.image_id) j["image_id"] = *spec.image_id;
  if (spec.tool_id) j["tool_id"] = *spec.tool_id;
  j["warmup_time"] = spec.warmup_time;
  if (spec.content_bytes > 0) j["content_bytes"] = spec.content_bytes;
  return j;
}

namespace {

BackendSpec backend_at(const json& doc, const std::string& path) {
  BackendSpec s;
  try {
    s.kind = parse_backend_kind(get_string(field(doc, "kind", path), path + ".kind"));
  } catch (const PathError&) {
    throw;
  } catch (const Error& e) {
    throw PathError(path + ".kind", e.what());
  }
  s.model_id = opt_string(doc, "model_id", path);
  s.lora_id = opt_string(doc, "lora_id", path);
  s.kv_prefix_id = opt_string(doc, "kv_prefix_id", path);
  s.image_id = opt_string(doc, "image_id", path);
  s.tool_id = opt_string(doc, "tool_id", path);
  if (doc.contains("warmup_time")) {
    s.warmup_time = get_number(doc["warmup_time"], path + ".warmup_time");
  }
  if (doc.contains("content_bytes")) {
    s.content_bytes = get_number(doc["content_bytes"], path + ".content_bytes");
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw PathError(path, e.what());
  }
  return s;
}

}  // namespace

BackendSpec backend_from_json(const json& doc) { return backend_at(doc, "backend"); }

json to_json(const PDGraph& graph) {
  json doc;
  doc["app_id"] = graph.app_id;
  doc["entry_unit"] = graph.entry_unit;
  doc["capacity"] = graph.capacity;
  doc["bucket_count"] = graph.bucket_count;
  json units = json::array();
  for (const auto& [id, u] : graph.units) {
    json ju;
    ju["unit_id"] = id;
    ju["backend"] = to_json(u.backend);
    ju["samples"] = {{"input", samples_json(u.input_dist)},
                     {"output", samples_json(u.output_dist)},
                     {"parallelism", samples_json(u.parallelism_dist)},
                     {"duration", samples_json(u.duration_dist)}};
    json recs = json::array();
    for (const auto& r : u.records) {
      json jr = {{"trial_id", r.trial_id},   {"step", r.step},
                 {"input_len", r.input_len}, {"output_len", r.output_len},
                 {"parallelism", r.parallelism}, {"duration", r.duration}};
      jr["next_unit"] = r.next_unit ? json(*r.next_unit) : json(nullptr);
      recs.push_back(std::move(jr));
    }
    ju["records"] = std::move(recs);
    json succ = json::object();
    for (const auto& [s, p] : u.successors) succ[s] = p;
    ju["successors"] = std::move(succ);
    ju["masks"] = {{"i_itilde", u.masks.input_upstream_input},
                   {"i_otilde", u.masks.input_upstream_output},
                   {"o_otilde", u.masks.output_upstream_output},
                   {"o_i", u.masks.output_input},
                   {"p_ptilde", u.masks.parallelism_upstream}};
    units.push_back(std::move(ju));
  }
  doc["units"] = std::move(units);
  return doc;
}

PDGraph graph_from_json(const json& doc) {
  PDGraph g;
  g.app_id = get_string(field(doc, "app_id", "$"), "$.app_id");
  if (doc.contains("capacity")) {
    double c = get_number(doc["capacity"], "$.capacity");
    if (c < 1) throw PathError("$.capacity", "must be positive");
    g.capacity = static_cast<std::size_t>(c);
  }
  if (doc.contains("bucket_count")) {
    double b = get_number(doc["bucket_count"], "$.bucket_count");
    if (b < 1) throw PathError("$.bucket_count", "must be positive");
    g.bucket_count = static_cast<std::size_t>(b);
  }
  const auto& units = field(doc, "units", "$");
  if (!units.is_array()) throw PathError("$.units", "expected an array");
  for (std::size_t i = 0; i < units.size(); ++i) {
    const std::string up = "$.units[" + std::to_string(i) + "]";
    const auto& ju = units[i];
    auto id = get_string(field(ju, "unit_id", up), up + ".unit_id");
    if (g.contains(id)) throw PathError(up + ".unit_id", "duplicate unit id");
    auto& u = g.add_unit(id, backend_at(field(ju, "backend", up), up + ".backend"));
    if (ju.contains("samples")) {
      const auto& js = ju["samples"];
      const std::string sp = up + ".samples";
      if (!js.is_object()) throw PathError(sp, "expected an object");
      load_samples(js, "input", sp, u.input_dist);
      load_samples(js, "output", sp, u.output_dist);
      load_samples(js, "parallelism", sp, u.parallelism_dist);
      load_samples(js, "duration", sp, u.duration_dist);
    }
    if (ju.contains("records")) {
      const auto& jr = ju["records"];
      const std::string rp = up + ".records";
      if (!jr.is_array()) throw PathError(rp, "expected an array");
      if (jr.size() > u.record_capacity) throw PathError(rp, "exceeds capacity");
      for (std::size_t k = 0; k < jr.size(); ++k) {
        const std::string p = rp + "[" + std::to_string(k) + "]";
        const auto& r = jr[k];
        UnitRecord rec;
        rec.trial_id = static_cast<std::int64_t>(
            get_number(field(r, "trial_id", p), p + ".trial_id"));
        if (r.contains("step")) {
          rec.step = static_cast<int>(get_number(r["step"], p + ".step"));
        }
        rec.input_len = get_number(field(r, "input_len", p), p + ".input_len");
        rec.output_len = get_number(field(r, "output_len", p), p + ".output_len");
        rec.parallelism = static_cast<int>(
            get_number(field(r, "parallelism", p), p + ".parallelism"));
        if (r.contains("duration")) {
          rec.duration = get_number(r["duration"], p + ".duration");
        }
        if (rec.input_len < 0) throw PathError(p + ".input_len", "must be >= 0");
        if (rec.output_len < 0) throw PathError(p + ".output_len", "must be >= 0");
        if (rec.duration < 0) throw PathError(p + ".duration", "must be >= 0");
        if (rec.parallelism < 1) throw PathError(p + ".parallelism", "must be >= 1");
        rec.next_unit = opt_string(r, "next_unit", p);
        u.records.push_back(std::move(rec));
      }
    }
    if (ju.contains("successors")) {
      const auto& js = ju["successors"];
      const std::string sp = up + ".successors";
      if (!js.is_object()) throw PathError(sp, "expected an object");
      for (auto it = js.begin(); it != js.end(); ++it) {
        u.successors[it.key()] = get_number(it.value(), sp + "." + it.key());
      }
    } else {
      u.successors = branch_probabilities(u);
    }
    if (ju.contains("masks")) {
      const auto& jm = ju["masks"];
      const std::string mp = up + ".masks";
      auto flag = [&](const char* key) {
        auto it = jm.find(key);
        if (it == jm.end()) return false;
        if (!it->is_boolean()) throw PathError(mp + "." + key, "expected a boolean");
        return it->get<bool>();
      };
      if (!jm.is_object()) throw PathError(mp, "expected an object");
      u.masks.input_upstream_input = flag("i_itilde");
      u.masks.input_upstream_output = flag("i_otilde");
      u.masks.output_upstream_output = flag("o_otilde");
      u.masks.output_input = flag("o_i");
      u.masks.parallelism_upstream = flag("p_ptilde");
    }
  }
  if (units.empty()) throw PathError("$.units", "no units");
  g.entry_unit = get_string(field(doc, "entry_unit", "$"), "$.entry_unit");
  for (std::size_t i = 0; i < units.size(); ++i) {
    const std::string up = "$.units[" + std::to_string(i) + "]";
    const auto& u = g.unit(units[i]["unit_id"].get<std::string>());
    for (std::size_t k = 0; k < u.records.size(); ++k) {
      const auto& nu = u.records[k].next_unit;
      if (nu && !g.contains(*nu)) {
        throw PathError(up + ".records[" + std::to_string(k) + "].next_unit",
                        "unknown unit id '" + *nu + "'");
      }
    }
    for (const auto& [s, _] : u.successors) {
      if (!g.contains(s)) {
        throw PathError(up + ".successors." + s, "unknown unit id");
      }
    }
  }
  if (!g.contains(g.entry_unit)) {
    throw PathError("$.entry_unit", "unknown unit id '" + g.entry_unit + "'");
  }
  try {
    g.validate();
  } catch (const PathError&) {
    throw;
  } catch (const Error& e) {
    throw PathError("$", e.what());
  }
  return g;
}

PDGraph load_knowledge_base(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open knowledge base '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  try {
    return graph_from_json(doc);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void save_knowledge_base(const PDGraph& graph,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write knowledge base '" + path.string() + "'");
  out << to_json(graph).dump(1) << '\n';
}

}  // namespace pdsim
