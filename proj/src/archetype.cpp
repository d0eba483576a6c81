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

#include <cmath>
#include <random>

#include "pdsim/common.hpp"
#include "pdsim/estimator.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

const char* to_string(ArchetypeKind kind) {
  switch (kind) {
    case ArchetypeKind::FanoutReduce: return "fanout-reduce";
    case ArchetypeKind::VerifyChain: return "verify-chain";
    case ArchetypeKind::ReactLoop: return "react-loop";
    case ArchetypeKind::PlanExecute: return "plan-execute";
    case ArchetypeKind::CodeCheck: return "code-check";
  }
  return "unknown";
}

ArchetypeKind parse_archetype(const std::string& name) {
  for (auto k : {ArchetypeKind::FanoutReduce, ArchetypeKind::VerifyChain,
                 ArchetypeKind::ReactLoop, ArchetypeKind::PlanExecute,
                 ArchetypeKind::CodeCheck}) {
    if (name == to_string(k)) return k;
  }
  throw Error("unknown archetype '" + name + "'");
}

std::string default_size_class(ArchetypeKind kind) {
  switch (kind) {
    case ArchetypeKind::VerifyChain:
    case ArchetypeKind::ReactLoop: return "small";
    case ArchetypeKind::PlanExecute:
    case ArchetypeKind::CodeCheck: return "medium";
    case ArchetypeKind::FanoutReduce: return "large";
  }
  return "small";
}

namespace {

class Generator {
 public:
  Generator(const ArchetypeParams& p, std::uint64_t seed) : p_(p), rng_(seed) {}

  // Log-normal draw with the given median and shape.
  double lognormal(double median, double sigma) {
    return median * std::exp(sigma * normal_(rng_));
  }
  double tokens(double median, double sigma) {
    return std::max(1.0, std::round(lognormal(median * p_.length_scale, sigma)));
  }
  double seconds(double median, double sigma) {
    return lognormal(median * p_.duration_scale, sigma);
  }
  double uniform() { return rng_.uniform(); }
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(rng_.below(static_cast<std::size_t>(hi - lo + 1)));
  }

 private:
  const ArchetypeParams& p_;
  SplitMix64 rng_;
  std::normal_distribution<double> normal_;
};

class TrialBuilder {
 public:
  explicit TrialBuilder(std::int64_t id) : id_(id) {}

  UnitRecord& llm(const std::string& unit, double in, double out, int par = 1) {
    UnitRecord r;
    r.input_len = in;
    r.output_len = out;
    r.parallelism = par;
    return push(unit, r);
  }
  UnitRecord& task(const std::string& unit, double duration) {
    UnitRecord r;
    r.duration = duration;
    return push(unit, r);
  }
  Trial finish() {
    for (std::size_t k = 0; k + 1 < trial_.size(); ++k) {
      trial_[k].second.next_unit = trial_[k + 1].first;
    }
    return std::move(trial_);
  }

 private:
  UnitRecord& push(const std::string& unit, UnitRecord r) {
    r.trial_id = id_;
    trial_.emplace_back(unit, r);
    return trial_.back().second;
  }

  std::int64_t id_;
  Trial trial_;
};

// True once `iter` passes of a loop body have run and no more are allowed.
bool capped(const ArchetypeParams& p, int iter) {
  return p.max_iterations > 0 && iter >= p.max_iterations;
}

BackendSpec llm_backend(const ArchetypeParams& p, const std::string& unit) {
  std::optional<std::string> kv;
  double warmup = 0.0;
  double bytes = 0.0;
  if (p.kv_bytes > 0) {
    kv = p.app_id + "/" + unit;
    warmup = p.kv_warmup;
    bytes = p.kv_bytes;
  } else if (p.lora_id) {
    warmup = p.lora_warmup;
    bytes = p.lora_bytes;
  }
  return BackendSpec::llm(p.model, p.lora_id, kv, warmup, bytes);
}

void verify_chain(PDGraph& g, const ArchetypeParams& p, Generator& gen) {
  for (const char* u : {"draft", "generate-queries", "verify-claims", "summarize"}) {
    g.add_unit(u, llm_backend(p, u));
  }
  const double loop = p.loop_back < 0 ? 0.0 : p.loop_back;
  for (int t = 0; t < p.trials; ++t) {
    TrialBuilder b(t);
    double draft_in = gen.tokens(500, 0.4);
    for (int iter = 1;; ++iter) {
      const double draft_out = gen.tokens(200, 0.6);
      b.llm("draft", draft_in, draft_out);
      const int queries = gen.uniform_int(1, 6);
      const double gq_out = gen.tokens(40, 0.4);
      b.llm("generate-queries", draft_out + p.copy_offset, gq_out, queries);
      const double v_in = gq_out + p.copy_offset;
      const double v_out = std::max(1.0, std::round(0.5 * v_in * gen.lognormal(1.0, 0.15)));
      b.llm("verify-claims", v_in, v_out, queries);
      if (capped(p, iter) || gen.uniform() >= loop) break;
      draft_in = draft_in + draft_out;
    }
    b.llm("summarize", gen.tokens(600, 0.3), gen.tokens(150, 0.5));
    record_trial(g, b.finish());
  }
}

void react_loop(PDGraph& g, const ArchetypeParams& p, Generator& gen) {
  g.add_unit("think", llm_backend(p, "think"));
  g.add_unit("act", BackendSpec::tool(p.app_id + "/act"));
  g.add_unit("answer", llm_backend(p, "answer"));
  const double loop = p.loop_back < 0 ? 0.6 : p.loop_back;
  for (int t = 0; t < p.trials; ++t) {
    TrialBuilder b(t);
    for (int visit = 0, iter = 1;; ++visit, ++iter) {
      b.llm("think", gen.tokens(800, 0.3) + 100.0 * visit, gen.tokens(60, 0.5));
      b.task("act", gen.seconds(1.0, 0.5));
      if (capped(p, iter) || gen.uniform() >= loop) break;
    }
    b.llm("answer", gen.tokens(1500, 0.3), gen.tokens(120, 0.4));
    record_trial(g, b.finish());
  }
}

void code_check(PDGraph& g, const ArchetypeParams& p, Generator& gen) {
  g.add_unit("plan", llm_backend(p, "plan"));
  g.add_unit("generate-code", llm_backend(p, "generate-code"));
  g.add_unit("run-tests", BackendSpec::docker(p.app_id + "/sandbox", p.docker_warmup));
  g.add_unit("finalize", llm_backend(p, "finalize"));
  const double loop = p.loop_back < 0 ? 0.4 : p.loop_back;
  for (int t = 0; t < p.trials; ++t) {
    TrialBuilder b(t);
    const double plan_out = gen.tokens(250, 0.4);
    b.llm("plan", gen.tokens(600, 0.3), plan_out);
    double in = plan_out + p.copy_offset;
    for (int iter = 1;; ++iter) {
      const double out = std::max(1.0, std::round(1.2 * in * gen.lognormal(1.0, 0.2)));
      b.llm("generate-code", in, out);
      b.task("run-tests", gen.seconds(6.0, 0.4));
      if (capped(p, iter) || gen.uniform() >= loop) break;
      in += std::round(200.0 * p.length_scale);
    }
    b.llm("finalize", gen.tokens(1000, 0.3), gen.tokens(200, 0.4));
    record_trial(g, b.finish());
  }
}

void plan_execute(PDGraph& g, const ArchetypeParams& p, Generator& gen) {
  g.add_unit("plan", llm_backend(p, "plan"));
  g.add_unit("vision", BackendSpec::dnn(p.app_id + "/vision", p.dnn_warmup));
  g.add_unit("diffusion", BackendSpec::dnn(p.app_id + "/diffusion", p.dnn_warmup));
  g.add_unit("code-exec", BackendSpec::docker(p.app_id + "/exec", p.docker_warmup));
  g.add_unit("respond", llm_backend(p, "respond"));
  for (int t = 0; t < p.trials; ++t) {
    TrialBuilder b(t);
    b.llm("plan", gen.tokens(800, 0.3), gen.tokens(300, 0.5));
    const double u = gen.uniform();
    if (u < 0.4) {
      b.task("vision", gen.seconds(4.0, 0.3));
    } else if (u < 0.7) {
      b.task("diffusion", gen.seconds(25.0, 0.3));
    } else if (u < 0.9) {
      b.task("code-exec", gen.seconds(10.0, 0.4));
    }
    b.llm("respond", gen.tokens(1000, 0.3), gen.tokens(400, 0.5));
    record_trial(g, b.finish());
  }
}

void fanout_reduce(PDGraph& g, const ArchetypeParams& p, Generator& gen) {
  if (p.fan_out < 1) throw Error("fan_out must be at least 1");
  for (const char* u : {"split", "map", "reduce", "score"}) {
    g.add_unit(u, llm_backend(p, u));
  }
  const double loop = p.loop_back < 0 ? 0.8 : p.loop_back;
  for (int t = 0; t < p.trials; ++t) {
    TrialBuilder b(t);
    b.llm("split", gen.tokens(3000, 0.3), gen.tokens(100, 0.3));
    for (int iter = 1;; ++iter) {
      const double map_out = gen.tokens(500, 0.4);
      b.llm("map", gen.tokens(2000, 0.3), map_out, p.fan_out);
      const double reduce_out = gen.tokens(600, 0.4);
      b.llm("reduce", p.fan_out * map_out + p.copy_offset, reduce_out);
      b.llm("score", reduce_out + p.copy_offset, gen.tokens(20, 0.3));
      if (capped(p, iter) || gen.uniform() >= loop) break;
    }
    record_trial(g, b.finish());
  }
}

}  // namespace

PDGraph archetype(ArchetypeKind kind, const ArchetypeParams& params,
                  std::uint64_t seed) {
  if (params.trials < 1) throw Error("trials must be at least 1");
  if (params.loop_back >= 1.0) throw Error("loop_back must be below 1");
  ArchetypeParams p = params;
  if (p.app_id.empty()) p.app_id = to_string(kind);
  PDGraph g;
  g.app_id = p.app_id;
  Generator gen(p, seed);
  switch (kind) {
    case ArchetypeKind::VerifyChain: verify_chain(g, p, gen); break;
    case ArchetypeKind::ReactLoop: react_loop(g, p, gen); break;
    case ArchetypeKind::CodeCheck: code_check(g, p, gen); break;
    case ArchetypeKind::PlanExecute: plan_execute(g, p, gen); break;
    case ArchetypeKind::FanoutReduce: fanout_reduce(g, p, gen); break;
  }
  build_masks(g, p.correlation_threshold);
  g.validate();
  return g;
}

}  // namespace pdsim
