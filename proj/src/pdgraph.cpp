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

#include "pdsim/pdgraph.hpp"

#include <cmath>
#include <set>

#include "pdsim/common.hpp"

namespace pdsim {

const char* to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::LlmInference: return "llm";
    case BackendKind::DockerExec: return "docker";
    case BackendKind::DnnTool: return "dnn";
    case BackendKind::ExternalTool: return "tool";
  }
  return "unknown";
}

BackendKind parse_backend_kind(const std::string& name) {
  if (name == "llm") return BackendKind::LlmInference;
  if (name == "docker") return BackendKind::DockerExec;
  if (name == "dnn") return BackendKind::DnnTool;
  if (name == "tool") return BackendKind::ExternalTool;
  throw Error("unknown backend kind '" + name + "'");
}

std::optional<std::string> BackendSpec::warm_content() const {
  switch (kind) {
    case BackendKind::LlmInference:
      return kv_prefix_id ? kv_prefix_id : lora_id;
    case BackendKind::DockerExec:
      return image_id;
    case BackendKind::DnnTool:
    case BackendKind::ExternalTool:
      return tool_id;
  }
  return std::nullopt;
}

void BackendSpec::validate() const {
  if (!(warmup_time >= 0.0) || !std::isfinite(warmup_time)) {
    throw Error("backend warmup_time must be >= 0");
  }
  if (!(content_bytes >= 0.0)) throw Error("backend content_bytes must be >= 0");
  const bool llm = kind == BackendKind::LlmInference;
  const bool docker = kind == BackendKind::DockerExec;
  if (llm != model_id.has_value()) {
    throw Error(llm ? "llm backend requires model_id"
                    : "model_id is only valid for llm backends");
  }
  if (!llm && (lora_id || kv_prefix_id)) {
    throw Error("lora_id/kv_prefix_id are only valid for llm backends");
  }
  if (docker != image_id.has_value()) {
    throw Error(docker ? "docker backend requires image_id"
                       : "image_id is only valid for docker backends");
  }
  const bool tool = kind == BackendKind::DnnTool ||
                    kind == BackendKind::ExternalTool;
  if (tool != tool_id.has_value()) {
    throw Error(tool ? "dnn/tool backend requires tool_id"
                     : "tool_id is only valid for dnn/tool backends");
  }
}

BackendSpec BackendSpec::llm(std::string model, std::optional<std::string> lora,
                             std::optional<std::string> kv_prefix,
                             double warmup_time, double content_bytes) {
  BackendSpec s;
  s.kind = BackendKind::LlmInference;
  s.model_id = std::move(model);
  s.lora_id = std::move(lora);
  s.kv_prefix_id = std::move(kv_prefix);
  s.warmup_time = warmup_time;
  s.content_bytes = content_bytes;
  return s;
}

BackendSpec BackendSpec::docker(std::string image, double warmup_time) {
  BackendSpec s;
  s.kind = BackendKind::DockerExec;
  s.image_id = std::move(image);
  s.warmup_time = warmup_time;
  return s;
}

BackendSpec BackendSpec::dnn(std::string tool, double warmup_time) {
  BackendSpec s;
  s.kind = BackendKind::DnnTool;
  s.tool_id = std::move(tool);
  s.warmup_time = warmup_time;
  return s;
}

BackendSpec BackendSpec::tool(std::string tool, double warmup_time) {
  BackendSpec s;
  s.kind = BackendKind::ExternalTool;
  s.tool_id = std::move(tool);
  s.warmup_time = warmup_time;
  return s;
}

FunctionalUnit::FunctionalUnit(std::string id, BackendSpec spec,
                               std::size_t capacity, std::size_t bucket_count)
    : unit_id(std::move(id)),
      backend(std::move(spec)),
      input_dist(capacity, bucket_count),
      output_dist(capacity, bucket_count),
      parallelism_dist(capacity, bucket_count),
      duration_dist(capacity, bucket_count),
      record_capacity(capacity) {}

double FunctionalUnit::termination_probability() const {
  double sum = 0.0;
  for (const auto& [_, p] : successors) sum += p;
  return std::max(0.0, 1.0 - sum);
}

void FunctionalUnit::append(const UnitRecord& record) {
  if (records.size() == record_capacity) records.pop_front();
  records.push_back(record);
  if (is_llm()) {
    input_dist.add(record.input_len);
    output_dist.add(record.output_len);
    parallelism_dist.add(static_cast<double>(record.parallelism));
  } else {
    duration_dist.add(record.duration);
  }
}

FunctionalUnit& PDGraph::add_unit(const std::string& id, BackendSpec spec) {
  auto [it, inserted] =
      units.try_emplace(id, id, std::move(spec), capacity, bucket_count);
  if (!inserted) throw Error("duplicate unit id '" + id + "'");
  if (entry_unit.empty()) entry_unit = id;
  return it->second;
}

const FunctionalUnit& PDGraph::unit(const std::string& id) const {
  auto it = units.find(id);
  if (it == units.end()) throw Error("unknown unit id '" + id + "'");
  return it->second;
}

FunctionalUnit& PDGraph::unit(const std::string& id) {
  auto it = units.find(id);
  if (it == units.end()) throw Error("unknown unit id '" + id + "'");
  return it->second;
}

std::vector<std::string> PDGraph::predecessors(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& [uid, u] : units) {
    if (u.successors.count(id)) out.push_back(uid);
  }
  return out;
}

void PDGraph::validate() const {
  if (!contains(entry_unit)) {
    throw Error("entry unit '" + entry_unit + "' does not exist");
  }
  for (const auto& [id, u] : units) {
    const std::string where = "unit '" + id + "': ";
    try {
      u.backend.validate();
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    double sum = 0.0;
    for (const auto& [succ, p] : u.successors) {
      if (!contains(succ)) {
        throw Error(where + "successor '" + succ + "' does not exist");
      }
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(where + "successor probability outside [0,1]");
      }
      sum += p;
    }
    if (sum > 1.0 + 1e-9) throw Error(where + "successor probabilities sum > 1");
    if (u.records.size() > u.record_capacity) {
      throw Error(where + "more records than capacity");
    }
    if (!u.records.empty()) {
      auto expect = branch_probabilities(u);
      for (const auto& [succ, p] : expect) {
        auto it = u.successors.find(succ);
        double got = it == u.successors.end() ? 0.0 : it->second;
        if (std::abs(got - p) > 1e-9) {
          throw Error(where + "successor '" + succ +
                      "' probability disagrees with recorded frequencies");
        }
      }
      for (const auto& [succ, p] : u.successors) {
        if (!expect.count(succ) && p > 1e-9) {
          throw Error(where + "successor '" + succ + "' never taken in records");
        }
      }
    }
  }
  std::set<std::string> seen{entry_unit};
  std::vector<std::string> stack{entry_unit};
  while (!stack.empty()) {
    auto id = stack.back();
    stack.pop_back();
    for (const auto& [succ, _] : units.at(id).successors) {
      if (seen.insert(succ).second) stack.push_back(succ);
    }
  }
  for (const auto& [id, _] : units) {
    if (!seen.count(id)) {
      throw Error("unit '" + id + "' is unreachable from entry '" +
                  entry_unit + "'");
    }
  }
}

std::map<std::string, double> branch_probabilities(const FunctionalUnit& unit) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : unit.records) {
    if (r.next_unit) ++counts[*r.next_unit];
  }
  std::map<std::string, double> out;
  const auto n = static_cast<double>(unit.records.size());
  for (const auto& [id, c] : counts) out[id] = static_cast<double>(c) / n;
  return out;
}

void record_trial(PDGraph& graph, const Trial& trial) {
  if (trial.empty()) throw Error("empty trial");
  if (trial.front().first != graph.entry_unit) {
    throw Error("trial path is disconnected from entry unit '" +
                graph.entry_unit + "'");
  }
  for (std::size_t k = 0; k < trial.size(); ++k) {
    const auto& [id, rec] = trial[k];
    if (!graph.contains(id)) throw Error("unknown unit id '" + id + "'");
    if (rec.trial_id != trial.front().second.trial_id) {
      throw Error("trial records carry different trial ids");
    }
    if (rec.input_len < 0 || rec.output_len < 0 || rec.duration < 0 ||
        rec.parallelism < 1) {
      throw Error("invalid demand values in record for unit '" + id + "'");
    }
    if (k + 1 < trial.size()) {
      const auto& next = trial[k + 1].first;
      if (!rec.next_unit || *rec.next_unit != next) {
        throw Error("trial path is disconnected at unit '" + id + "'");
      }
    } else if (rec.next_unit) {
      if (!graph.contains(*rec.next_unit)) {
        throw Error("unknown unit id '" + *rec.next_unit + "'");
      }
      throw Error("trial path is disconnected after unit '" + id + "'");
    }
  }
  std::set<std::string> touched;
  for (std::size_t k = 0; k < trial.size(); ++k) {
    UnitRecord rec = trial[k].second;
    rec.step = static_cast<int>(k);
    graph.unit(trial[k].first).append(rec);
    touched.insert(trial[k].first);
  }
  for (const auto& id : touched) {
    auto& u = graph.unit(id);
    u.successors = branch_probabilities(u);
  }
}

double service_time(double input_len, double output_len,
                    const RateProfile& env) {
  if (input_len < 0 || output_len < 0) {
    throw Error("token lengths must be non-negative");
  }
  if (!(env.prefill_rate > 0) || !(env.decode_rate > 0)) {
    throw Error("token rates must be positive");
  }
  return input_len / env.prefill_rate + output_len / env.decode_rate;
}

}  // namespace pdsim
