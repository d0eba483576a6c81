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

#include "pdsim/sim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <queue>
#include <set>
#include <tuple>

#include "pdsim/common.hpp"
#include "pdsim/estimator.hpp"

namespace pdsim {

void Environment::validate() const {
  if (engines.empty()) throw Error("environment has no engines");
  for (const auto& e : engines) {
    if (e.slots < 1) throw Error("engine '" + e.id + "' needs at least one slot");
    if (!(e.rates.prefill_rate > 0) || !(e.rates.decode_rate > 0)) {
      throw Error("engine '" + e.id + "' rates must be positive");
    }
    if (!(e.cache_capacity >= 0)) throw Error("engine '" + e.id + "' cache capacity < 0");
  }
  for (const auto& [kind, p] : pools) {
    if (p.pool_size < 0 || !(p.keep_alive >= 0)) {
      throw Error(std::string("invalid pool for backend ") + to_string(kind));
    }
  }
}

namespace {

TrueVisit visit_from(const std::string& unit, const UnitRecord& r, double scale) {
  return {unit, r.input_len * scale, r.output_len * scale, r.parallelism,
          r.duration * scale};
}

// Complete profiling trials stored in a graph, each as its ordered path.
std::vector<TrueRun> trial_bank(const PDGraph& g) {
  std::map<std::int64_t, std::vector<std::pair<int, TrueVisit>>> by_trial;
  std::map<std::int64_t, std::vector<const UnitRecord*>> recs;
  for (const auto& [id, unit] : g.units) {
    for (const auto& r : unit.records) {
      by_trial[r.trial_id].emplace_back(r.step, visit_from(id, r, 1.0));
      recs[r.trial_id].push_back(&r);
    }
  }
  std::vector<TrueRun> bank;
  for (auto& [tid, visits] : by_trial) {
    std::vector<std::size_t> order(visits.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return visits[a].first < visits[b].first; });
    bool ok = !visits.empty();
    for (std::size_t k = 0; ok && k < order.size(); ++k) {
      const auto* r = recs[tid][order[k]];
      if (visits[order[k]].first != static_cast<int>(k)) ok = false;
      const bool last = k + 1 == order.size();
      if (last && r->next_unit) ok = false;
      if (!last && (!r->next_unit || *r->next_unit != visits[order[k + 1]].second.unit_id)) {
        ok = false;
      }
    }
    if (!ok || visits[order[0]].second.unit_id != g.entry_unit) continue;
    TrueRun run;
    for (std::size_t k : order) run.push_back(visits[k].second);
    bank.push_back(std::move(run));
  }
  return bank;
}

double pick(const EmpiricalDistribution& d, SplitMix64& rng) {
  if (d.empty()) return 0.0;
  return d.samples()[rng.below(d.size())];
}

TrueRun marginal_walk(const PDGraph& g, SplitMix64& rng, double scale) {
  TrueRun run;
  std::string u = g.entry_unit;
  for (int visits = 0; visits < 64 && !u.empty(); ++visits) {
    const auto& unit = g.unit(u);
    TrueVisit v;
    v.unit_id = u;
    if (unit.is_llm()) {
      v.input_len = pick(unit.input_dist, rng) * scale;
      v.output_len = pick(unit.output_dist, rng) * scale;
      v.parallelism = std::max(1, static_cast<int>(std::lround(pick(unit.parallelism_dist, rng))));
    } else {
      v.duration = pick(unit.duration_dist, rng) * scale;
    }
    run.push_back(v);
    const double x = rng.uniform();
    double acc = 0.0;
    std::string next;
    for (const auto& [s, p] : unit.successors) {
      acc += p;
      if (x < acc) {
        next = s;
        break;
      }
    }
    u = next;
  }
  return run;
}

}  // namespace

std::vector<TrueRun> draw_true_runs(const WorkloadSpec& workload,
                                    const std::map<std::string, PDGraph>& graphs,
                                    std::uint64_t seed, double demand_scale) {
  if (!(demand_scale > 0)) throw Error("demand scale must be positive");
  std::map<std::string, std::vector<TrueRun>> banks;
  std::vector<TrueRun> runs;
  runs.reserve(workload.arrivals.size());
  for (std::size_t i = 0; i < workload.arrivals.size(); ++i) {
    const auto& a = workload.arrivals[i];
    auto g = graphs.find(a.app_id);
    if (g == graphs.end()) throw Error("unknown application '" + a.app_id + "'");
    auto b = banks.find(a.app_id);
    if (b == banks.end()) b = banks.emplace(a.app_id, trial_bank(g->second)).first;
    SplitMix64 rng(derive_seed(seed, i, 0x7472), 0);
    if (b->second.empty()) {
      runs.push_back(marginal_walk(g->second, rng, demand_scale));
    } else {
      TrueRun run = b->second[rng.below(b->second.size())];
      for (auto& v : run) {
        v.input_len *= demand_scale;
        v.output_len *= demand_scale;
        v.duration *= demand_scale;
      }
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

double standalone_time(const TrueRun& run, const RateProfile& rates) {
  double t = 0.0;
  for (const auto& v : run) {
    if (v.duration > 0 || (v.input_len == 0 && v.output_len == 0)) {
      t += v.duration;
    } else {
      t += service_time(v.input_len, v.output_len, rates);
    }
  }
  return t;
}

namespace {

enum class EventKind {
  Arrival,
  TaskDispatch,
  TaskComplete,
  TaskPreempt,
  UnitComplete,
  AppComplete,
  PrewarmTrigger,
  PrewarmComplete,
  PriorityRefresh
};

const char* kind_name(EventKind k) {
  switch (k) {
    case EventKind::Arrival: return "arrival";
    case EventKind::TaskDispatch: return "task-dispatch";
    case EventKind::TaskComplete: return "task-complete";
    case EventKind::TaskPreempt: return "task-preempt";
    case EventKind::UnitComplete: return "unit-complete";
    case EventKind::AppComplete: return "app-complete";
    case EventKind::PrewarmTrigger: return "prewarm-trigger";
    case EventKind::PrewarmComplete: return "prewarm-complete";
    case EventKind::PriorityRefresh: return "priority-refresh";
  }
  return "?";
}

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Arrival;
  std::uint64_t target = 0;  // instance, task or plan id depending on kind
  std::uint64_t version = 0;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
  }
};

enum class TaskState { Waiting, Warming, Running, Done };

struct Task {
  std::uint64_t app = 0;
  int visit = 0;
  int index = 0;
  bool llm = true;
  int engine = -1;
  BackendKind pool = BackendKind::ExternalTool;
  double service = 0.0;
  double prefill = 0.0;
  double decode_step = 0.0;
  double done = 0.0;
  double run_start = 0.0;
  double enqueue_time = 0.0;
  TaskState state = TaskState::Waiting;
  std::uint64_t version = 0;
  bool preempt_pending = false;
  bool accessed = false;
  std::optional<std::string> content;
  double content_size = 0.0;
  double warmup = 0.0;
  int instance = -1;  // pool instance
  std::optional<std::uint64_t> plan;
};

struct PoolInstance {
  std::string content;
  double warm_at = 0.0;
  double idle_since = 0.0;
  bool busy = false;
  bool alive = true;
  std::optional<std::uint64_t> reserved_for;  // plan id
};

struct Pool {
  BackendKind kind;
  PoolConfig cfg;
  std::vector<PoolInstance> instances;
  int live = 0;
  std::vector<std::uint64_t> waiting;
};

struct Engine {
  EngineConfig cfg;
  std::optional<CacheState> cache;
  std::vector<std::uint64_t> active;
  std::vector<std::uint64_t> waiting;
  double busy = 0.0;
};

enum class PlanStatus { Pending, Triggered, Dropped, Resolved };

struct PlanState {
  PrewarmPlan plan;
  std::uint64_t app = 0;
  bool llm_target = false;
  int engine = -1;
  int instance = -1;
  PlanStatus status = PlanStatus::Pending;
  std::optional<double> arrival;
  std::optional<double> cancel;
};

struct AppState {
  const PDGraph* graph = nullptr;
  const CompiledGraph* compiled = nullptr;
  const TrueRun* run = nullptr;
  const Arrival* arrival = nullptr;
  int visit = -1;
  int pending_tasks = 0;
  int running = 0;
  double last_sync = 0.0;
  bool done = false;
  bool visit_started = false;
  std::size_t observations = 0;
  std::vector<std::uint64_t> plans;
  bool overrun = false;
  std::size_t live_pos = 0;
};

using TaskKey = std::tuple<double, double, std::uint64_t, std::uint64_t>;

class Simulator {
 public:
  Simulator(const WorkloadSpec& w, const std::map<std::string, PDGraph>& graphs,
            const SimConfig& cfg)
      : w_(w), graphs_(graphs), cfg_(cfg) {}

  SimResult run();

 private:
  // Event plumbing.
  void schedule(double time, EventKind kind, std::uint64_t target,
                std::uint64_t version = 0) {
    queue_.push(Event{time, seq_++, kind, target, version});
  }
  void log(const Event& e, const std::string& detail) {
    ++result_.events;
    if (!cfg_.event_log) return;
    result_.event_log +=
        fmt::format("{:.9f} {} {} {}\n", e.time, e.seq, kind_name(e.kind), detail);
  }

  ApplicationInstance& inst(std::uint64_t id) { return live_[apps_[id].live_pos]; }
  bool dynamic_policy() const {
    const Policy p = cfg_.scheduler.policy;
    return p == Policy::Gittins || p == Policy::Lstf || p == Policy::SrptMean ||
           p == Policy::FairShare;
  }

  void sync(std::uint64_t id);
  void refresh();
  void estimate(std::uint64_t id, int unit_index, const FirstHop* hop);
  TaskKey key(std::uint64_t task_id) const;
  bool should_preempt(double active_key, double waiting_key) const;

  int choose_engine(const BackendSpec& spec) const;
  NeedRanks need_ranks(const Engine& e) const;
  std::vector<std::uint64_t> waiting_order(const Engine& e) const;
  void prefetch_queue(Engine& e);

  void start_visit(std::uint64_t id, int k);
  void resolve_plans(std::uint64_t id, const std::string& next_unit);
  void enqueue(std::uint64_t task_id);
  void dispatch_all();
  void dispatch_engine(int e);
  void dispatch_pool(Pool& pool);
  void start_llm(std::uint64_t task_id);
  void begin_run(std::uint64_t task_id);
  void schedule_preempt(std::uint64_t task_id);
  void plan_successors(std::uint64_t id);
  void release_instance(Pool& pool, int idx);
  int create_instance(Pool& pool, const std::string& content, double warm_at);
  bool pool_has_room(Pool& pool);
  void purge(Pool& pool);
  Pool& pool_for(BackendKind kind);

  void on_arrival(const Event& e);
  void on_task_dispatch(const Event& e);
  void on_task_complete(const Event& e);
  void on_task_preempt(const Event& e);
  void on_unit_complete(const Event& e);
  void on_app_complete(const Event& e);
  void on_prewarm_trigger(const Event& e);
  void on_priority_refresh(const Event& e);

  const WorkloadSpec& w_;
  const std::map<std::string, PDGraph>& graphs_;
  const SimConfig& cfg_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;

  std::map<std::string, std::unique_ptr<CompiledGraph>> compiled_;
  std::vector<TrueRun> runs_;
  std::vector<AppState> apps_;
  std::vector<ApplicationInstance> live_;
  std::vector<std::uint64_t> live_ids_;
  std::vector<Task> tasks_;
  std::vector<Engine> engines_;
  std::map<BackendKind, Pool> pools_;
  std::vector<PlanState> plans_;
  std::map<std::string, double> tenant_service_;
  SimResult result_;
};

void Simulator::sync(std::uint64_t id) {
  AppState& a = apps_[id];
  if (a.done) return;
  const double dt = now_ - a.last_sync;
  if (dt > 0 && a.running > 0) {
    const double s = dt * a.running;
    inst(id).attained_service += s;
    inst(id).attained_latency += dt;
    tenant_service_[a.arrival->tenant_id] += s;
  }
  a.last_sync = now_;
}

void Simulator::refresh() {
  for (auto id : live_ids_) sync(id);
  PriorityContext ctx{cfg_.scheduler.overrun_penalty, &tenant_service_};
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = refresh_priorities(live_, now_, cfg_.scheduler.policy, ctx);
  const auto t1 = std::chrono::steady_clock::now();
  result_.refresh_wall_ns +=
      static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  result_.refreshes += n;
  for (std::size_t k = 0; k < live_.size(); ++k) {
    if (live_[k].priority.overrun) apps_[live_ids_[k]].overrun = true;
  }
}

void Simulator::estimate(std::uint64_t id, int unit_index, const FirstHop* hop) {
  AppState& a = apps_[id];
  McOptions opt;
  opt.n = cfg_.scheduler.mc_samples;
  opt.seed = derive_seed(cfg_.seed, id, a.observations);
  opt.max_visits = cfg_.scheduler.max_visits;
  opt.min_conditional_samples = cfg_.scheduler.min_conditional_samples;
  auto demand = monte_carlo_remaining_demand(*a.compiled, unit_index, hop,
                                             cfg_.env.reference_rates(), opt);
  result_.capped_walks += demand.capped_walks;
  auto& in = inst(id);
  in.bucket_period = default_bucket_period(demand, cfg_.scheduler.bucket_count);
  in.set_remaining(std::move(demand), cfg_.scheduler.bucket_count);
}

TaskKey Simulator::key(std::uint64_t task_id) const {
  const Task& t = tasks_[task_id];
  const AppState& a = apps_[t.app];
  const Priority& p = live_[a.live_pos].priority;
  const double k = cfg_.scheduler.policy == Policy::FcfsRequest ? t.enqueue_time : p.key;
  return {k, p.arrival_time, p.id, task_id};
}

bool Simulator::should_preempt(double active_key, double waiting_key) const {
  const auto& s = cfg_.scheduler;
  if (ratio_keyed(s.policy)) {
    return active_key - waiting_key > (s.hysteresis - 1.0) * std::abs(waiting_key);
  }
  return active_key - waiting_key > s.preempt_margin;
}

int Simulator::choose_engine(const BackendSpec& spec) const {
  int best = -1;
  std::size_t load = 0;
  for (std::size_t e = 0; e < engines_.size(); ++e) {
    const auto& models = engines_[e].cfg.models;
    if (!models.empty() && spec.model_id &&
        std::find(models.begin(), models.end(), *spec.model_id) == models.end()) {
      continue;
    }
    const std::size_t l = engines_[e].active.size() + engines_[e].waiting.size();
    if (best < 0 || l < load) {
      best = static_cast<int>(e);
      load = l;
    }
  }
  if (best < 0) {
    throw Error("no engine serves model '" + spec.model_id.value_or("") + "'");
  }
  return best;
}

// Running tasks rank -1; waiting tasks by position in dispatch order, as
// far down the queue as their distinct contents fit in the cache.
NeedRanks Simulator::need_ranks(const Engine& e) const {
  NeedRanks out;
  double used = 0.0;
  for (auto id : e.active) {
    const Task& t = tasks_[id];
    if (t.content && out.emplace(*t.content, -1.0).second) used += t.content_size;
  }
  for (auto id : waiting_order(e)) {
    const Task& t = tasks_[id];
    if (!t.content || out.count(*t.content)) continue;
    if (used + t.content_size > e.cache->capacity()) break;
    used += t.content_size;
    out.emplace(*t.content, static_cast<double>(out.size()));
  }
  return out;
}

std::vector<std::uint64_t> Simulator::waiting_order(const Engine& e) const {
  std::vector<std::pair<TaskKey, std::uint64_t>> order;
  for (auto id : e.waiting) order.emplace_back(key(id), id);
  std::sort(order.begin(), order.end());
  std::vector<std::uint64_t> out;
  out.reserve(order.size());
  for (const auto& [_, id] : order) out.push_back(id);
  return out;
}

// Queue-driven prefetch: warms the contents of the requests that will be
// served next (Epwq, and Hermes for requests its plans did not cover).
void Simulator::prefetch_queue(Engine& e) {
  if (!e.cache || e.cache->policy() == CachePolicy::Lru || e.waiting.empty()) return;
  const auto needed = need_ranks(e);
  for (auto id : waiting_order(e)) {
    const Task& t = tasks_[id];
    if (!t.content || t.accessed) continue;
    auto it = needed.find(*t.content);
    if (it == needed.end()) break;
    PrefetchContext ctx{PrefetchTrigger::Enqueue, now_, nullptr};
    if (t.plan) ctx.plan = &plans_[*t.plan].plan;
    if (cache_prefetch_signal(*e.cache, *t.content, t.content_size, e.cache->policy(), ctx)) {
      e.cache->prefetch(*t.content, t.content_size, t.warmup, now_, &needed, it->second);
    }
  }
}

Pool& Simulator::pool_for(BackendKind kind) {
  auto it = pools_.find(kind);
  if (it == pools_.end()) {
    PoolConfig cfg;
    if (auto c = cfg_.env.pools.find(kind); c != cfg_.env.pools.end()) cfg = c->second;
    it = pools_.emplace(kind, Pool{kind, cfg, {}, 0, {}}).first;
  }
  return it->second;
}

void Simulator::purge(Pool& pool) {
  for (auto& in : pool.instances) {
    if (in.alive && !in.busy && !in.reserved_for &&
        in.idle_since + pool.cfg.keep_alive < now_) {
      in.alive = false;
      --pool.live;
    }
  }
}

bool Simulator::pool_has_room(Pool& pool) {
  if (pool.cfg.pool_size == 0 || pool.live < pool.cfg.pool_size) return true;
  // Evict the longest-idle unreserved instance.
  int victim = -1;
  for (std::size_t k = 0; k < pool.instances.size(); ++k) {
    const auto& in = pool.instances[k];
    if (!in.alive || in.busy || in.reserved_for) continue;
    if (victim < 0 || in.idle_since < pool.instances[victim].idle_since) {
      victim = static_cast<int>(k);
    }
  }
  if (victim < 0) return false;
  pool.instances[victim].alive = false;
  --pool.live;
  return true;
}

int Simulator::create_instance(Pool& pool, const std::string& content, double warm_at) {
  PoolInstance in;
  in.content = content;
  in.warm_at = warm_at;
  in.idle_since = warm_at;
  pool.instances.push_back(in);
  ++pool.live;
  return static_cast<int>(pool.instances.size() - 1);
}

void Simulator::release_instance(Pool& pool, int idx) {
  auto& in = pool.instances[idx];
  in.busy = false;
  in.reserved_for.reset();
  in.idle_since = now_;
  if (pool.cfg.keep_alive <= 0) {
    in.alive = false;
    --pool.live;
  }
}

void Simulator::start_visit(std::uint64_t id, int k) {
  AppState& a = apps_[id];
  a.visit = k;
  a.visit_started = false;
  const TrueVisit& v = (*a.run)[k];
  const FunctionalUnit& unit = a.graph->unit(v.unit_id);
  resolve_plans(id, v.unit_id);
  std::optional<std::uint64_t> plan;
  for (auto pid : a.plans) {
    if (plans_[pid].arrival && plans_[pid].plan.target_unit == v.unit_id) plan = pid;
  }
  a.plans.clear();
  const int count = unit.is_llm() ? std::max(1, v.parallelism) : 1;
  a.pending_tasks = count;
  for (int j = 0; j < count; ++j) {
    Task t;
    t.app = id;
    t.visit = k;
    t.index = j;
    t.llm = unit.is_llm();
    t.plan = plan;
    t.content = unit.backend.warm_content();
    t.content_size = unit.backend.content_bytes;
    t.warmup = unit.backend.warmup_time;
    if (t.llm) {
      t.engine = choose_engine(unit.backend);
      const RateProfile& r = engines_[t.engine].cfg.rates;
      t.prefill = v.input_len / r.prefill_rate;
      t.decode_step = 1.0 / r.decode_rate;
      t.service = service_time(v.input_len, v.output_len, r);
      if (!engines_[t.engine].cache || t.content_size <= 0) t.content.reset();
    } else {
      t.pool = unit.backend.kind;
      t.service = v.duration;
      if (!t.content) t.content = unit.unit_id;
    }
    tasks_.push_back(std::move(t));
    enqueue(tasks_.size() - 1);
  }
}

void Simulator::resolve_plans(std::uint64_t id, const std::string& next_unit) {
  for (auto pid : apps_[id].plans) {
    PlanState& p = plans_[pid];
    if (p.status == PlanStatus::Pending) {
      p.status = PlanStatus::Dropped;
      continue;
    }
    if (p.status != PlanStatus::Triggered) continue;
    p.status = PlanStatus::Resolved;
    if (p.plan.target_unit == next_unit) {
      p.arrival = now_;
    } else {
      p.cancel = now_;
      if (!p.llm_target && p.instance >= 0) {
        Pool& pool = pool_for(p.plan.target.kind);
        auto& in = pool.instances[p.instance];
        if (in.alive && in.reserved_for == pid) {
          in.alive = false;
          --pool.live;
        }
      }
    }
  }
}

void Simulator::enqueue(std::uint64_t task_id) {
  Task& t = tasks_[task_id];
  t.state = TaskState::Waiting;
  t.enqueue_time = now_;
  if (!t.llm) {
    pool_for(t.pool).waiting.push_back(task_id);
    return;
  }
  Engine& e = engines_[t.engine];
  e.waiting.push_back(task_id);
  prefetch_queue(e);
}

void Simulator::dispatch_all() {
  for (std::size_t e = 0; e < engines_.size(); ++e) dispatch_engine(static_cast<int>(e));
  for (auto& [_, pool] : pools_) dispatch_pool(pool);
}

void Simulator::dispatch_engine(int ei) {
  Engine& e = engines_[ei];
  bool dispatched = false;
  while (static_cast<int>(e.active.size()) < e.cfg.slots && !e.waiting.empty()) {
    auto best = e.waiting.begin();
    TaskKey best_key = key(*best);
    for (auto it = std::next(e.waiting.begin()); it != e.waiting.end(); ++it) {
      TaskKey k = key(*it);
      if (k < best_key) {
        best = it;
        best_key = k;
      }
    }
    const auto id = *best;
    e.waiting.erase(best);
    e.active.push_back(id);
    start_llm(id);
    dispatched = true;
  }
  if (dispatched) prefetch_queue(e);
  if (!cfg_.scheduler.preemption || !preemptive(cfg_.scheduler.policy) ||
      e.waiting.empty()) {
    return;
  }
  std::vector<std::pair<TaskKey, std::uint64_t>> waiting, running;
  std::size_t pending = 0;
  for (auto id : e.waiting) waiting.emplace_back(key(id), id);
  for (auto id : e.active) {
    const Task& t = tasks_[id];
    if (t.preempt_pending) {
      ++pending;
    } else if (t.state == TaskState::Running) {
      running.emplace_back(key(id), id);
    }
  }
  std::sort(waiting.begin(), waiting.end());
  std::sort(running.begin(), running.end(), std::greater<>());
  for (std::size_t i = 0; i < running.size() && pending + i < waiting.size(); ++i) {
    const double ka = std::get<0>(running[i].first);
    const double kw = std::get<0>(waiting[pending + i].first);
    if (!should_preempt(ka, kw)) break;
    schedule_preempt(running[i].second);
  }
}

void Simulator::schedule_preempt(std::uint64_t task_id) {
  Task& t = tasks_[task_id];
  const double done_now = t.done + (now_ - t.run_start);
  double boundary;
  if (done_now < t.prefill) {
    boundary = t.prefill;
  } else {
    boundary = t.prefill + std::ceil((done_now - t.prefill) / t.decode_step) * t.decode_step;
    if (boundary < done_now) boundary += t.decode_step;
  }
  if (boundary >= t.service) return;  // finishes first
  t.preempt_pending = true;
  schedule(now_ + (boundary - done_now), EventKind::TaskPreempt, task_id, t.version);
}

void Simulator::start_llm(std::uint64_t task_id) {
  Task& t = tasks_[task_id];
  Engine& e = engines_[t.engine];
  double ready = now_;
  if (e.cache && t.content && !t.accessed) {
    t.accessed = true;
    const auto needed = need_ranks(e);
    const auto acc = e.cache->access(*t.content, t.content_size, t.warmup, now_, &needed);
    ready = std::max(now_, acc.ready_at);
  }
  t.state = TaskState::Warming;
  schedule(ready, EventKind::TaskDispatch, task_id, t.version);
}

void Simulator::dispatch_pool(Pool& pool) {
  if (pool.waiting.empty()) return;
  purge(pool);
  std::vector<std::pair<TaskKey, std::uint64_t>> order;
  for (auto id : pool.waiting) order.emplace_back(key(id), id);
  std::sort(order.begin(), order.end());
  std::vector<std::uint64_t> still;
  for (const auto& [_, id] : order) {
    Task& t = tasks_[id];
    int idx = -1;
    if (t.plan && plans_[*t.plan].instance >= 0) {
      const int r = plans_[*t.plan].instance;
      const auto& in = pool.instances[r];
      if (in.alive && in.reserved_for == *t.plan) idx = r;
    }
    if (idx < 0) {
      for (std::size_t k = 0; k < pool.instances.size(); ++k) {
        const auto& in = pool.instances[k];
        if (in.alive && !in.busy && !in.reserved_for && in.content == *t.content) {
          idx = static_cast<int>(k);
          break;
        }
      }
    }
    if (idx < 0 && pool_has_room(pool)) {
      idx = create_instance(pool, *t.content, now_ + t.warmup);
    }
    if (idx < 0) {
      still.push_back(id);
      continue;
    }
    auto& in = pool.instances[idx];
    in.busy = true;
    in.reserved_for.reset();
    t.instance = idx;
    t.state = TaskState::Warming;
    schedule(std::max(now_, in.warm_at), EventKind::TaskDispatch, id, t.version);
  }
  std::vector<std::uint64_t> keep;
  for (auto id : pool.waiting) {
    if (std::find(still.begin(), still.end(), id) != still.end()) keep.push_back(id);
  }
  pool.waiting = std::move(keep);
}

void Simulator::begin_run(std::uint64_t task_id) {
  Task& t = tasks_[task_id];
  AppState& a = apps_[t.app];
  sync(t.app);
  ++a.running;
  t.state = TaskState::Running;
  t.run_start = now_;
  schedule(now_ + (t.service - t.done), EventKind::TaskComplete, task_id, t.version);
  if (!a.visit_started) {
    a.visit_started = true;
    plan_successors(t.app);
  }
}

void Simulator::plan_successors(std::uint64_t id) {
  AppState& a = apps_[id];
  const TrueVisit& v = (*a.run)[a.visit];
  const FunctionalUnit& unit = a.graph->unit(v.unit_id);
  std::optional<EmpiricalDistribution> completion;
  for (const auto& [succ, p_s] : unit.successors) {
    const FunctionalUnit& target = a.graph->unit(succ);
    const auto content = target.backend.warm_content();
    if (!content || target.backend.warmup_time <= 0) continue;
    bool llm_target = target.is_llm();
    int engine = -1;
    if (llm_target) {
      engine = choose_engine(target.backend);
      const auto& e = engines_[engine];
      if (!e.cache || e.cache->policy() != CachePolicy::Hermes ||
          target.backend.content_bytes <= 0) {
        continue;
      }
    } else if (!cfg_.prewarm.enabled) {
      continue;
    }
    if (!completion) {
      completion.emplace(std::max<std::size_t>(cfg_.prewarm.completion_samples, 1),
                         cfg_.scheduler.bucket_count);
      SplitMix64 rng(derive_seed(cfg_.seed, id, 0x70726577ULL + a.visit));
      const auto& cu = a.compiled->unit(a.compiled->index_of(v.unit_id));
      for (std::size_t n = 0; n < cfg_.prewarm.completion_samples; ++n) {
        completion->add(now_ + sample_unit_latency(cu, nullptr, cfg_.env.reference_rates(),
                                                   cfg_.scheduler.min_conditional_samples,
                                                   rng));
      }
    }
    auto plan = plan_prewarm(*completion, p_s, target.backend.warmup_time,
                             cfg_.prewarm.knob, now_);
    if (!plan) continue;
    plan->target = target.backend;
    plan->target_unit = succ;
    PlanState ps;
    ps.plan = *plan;
    ps.app = id;
    ps.llm_target = llm_target;
    ps.engine = engine;
    plans_.push_back(std::move(ps));
    a.plans.push_back(plans_.size() - 1);
    schedule(plan->trigger_time, EventKind::PrewarmTrigger, plans_.size() - 1);
  }
}

void Simulator::on_arrival(const Event& e) {
  const std::uint64_t id = e.target;
  const Arrival& arr = w_.arrivals[id];
  AppState& a = apps_[id];
  a.graph = &graphs_.at(arr.app_id);
  a.compiled = compiled_.at(arr.app_id).get();
  a.run = &runs_[id];
  a.arrival = &arr;
  a.last_sync = now_;
  a.live_pos = live_.size();
  ApplicationInstance in;
  in.id = id;
  in.app_id = arr.app_id;
  in.tenant = arr.tenant_id;
  in.arrival_time = arr.time;
  in.deadline = arr.deadline;
  live_.push_back(std::move(in));
  live_ids_.push_back(id);
  log(e, fmt::format("app={} graph={}", id, arr.app_id));
  estimate(id, a.compiled->entry(), nullptr);
  if (dynamic_policy()) {
    schedule(now_ + inst(id).bucket_period, EventKind::PriorityRefresh, id);
  }
  refresh();
  start_visit(id, 0);
  dispatch_all();
}

void Simulator::on_task_dispatch(const Event& e) {
  Task& t = tasks_[e.target];
  if (t.version != e.version || t.state != TaskState::Warming) return;
  log(e, fmt::format("app={} unit={} task={}", t.app, (*apps_[t.app].run)[t.visit].unit_id,
                     t.index));
  begin_run(e.target);
}

void Simulator::on_task_complete(const Event& e) {
  Task& t = tasks_[e.target];
  if (t.version != e.version || t.state != TaskState::Running) return;
  AppState& a = apps_[t.app];
  log(e, fmt::format("app={} unit={} task={}", t.app, (*a.run)[t.visit].unit_id, t.index));
  sync(t.app);
  --a.running;
  t.state = TaskState::Done;
  t.done = t.service;
  if (t.llm) {
    Engine& eng = engines_[t.engine];
    eng.busy += now_ - t.run_start;
    eng.active.erase(std::find(eng.active.begin(), eng.active.end(), e.target));
  } else {
    release_instance(pool_for(t.pool), t.instance);
  }
  if (--a.pending_tasks == 0) schedule(now_, EventKind::UnitComplete, t.app);
  dispatch_all();
}

void Simulator::on_task_preempt(const Event& e) {
  Task& t = tasks_[e.target];
  if (t.version != e.version || t.state != TaskState::Running) return;
  AppState& a = apps_[t.app];
  log(e, fmt::format("app={} unit={} task={}", t.app, (*a.run)[t.visit].unit_id, t.index));
  sync(t.app);
  --a.running;
  Engine& eng = engines_[t.engine];
  eng.busy += now_ - t.run_start;
  t.done += now_ - t.run_start;
  ++t.version;
  t.preempt_pending = false;
  t.state = TaskState::Waiting;
  eng.active.erase(std::find(eng.active.begin(), eng.active.end(), e.target));
  eng.waiting.push_back(e.target);
  ++result_.preemptions;
  dispatch_all();
}

void Simulator::on_unit_complete(const Event& e) {
  const std::uint64_t id = e.target;
  AppState& a = apps_[id];
  const TrueVisit& v = (*a.run)[a.visit];
  log(e, fmt::format("app={} unit={}", id, v.unit_id));
  ++a.observations;
  const int next = a.visit + 1;
  if (next >= static_cast<int>(a.run->size())) {
    schedule(now_, EventKind::AppComplete, id);
    return;
  }
  const std::string& next_unit = (*a.run)[next].unit_id;
  if (cfg_.scheduler.refinement) {
    sync(id);
    Observation obs{v.unit_id, v.input_len, v.output_len, v.parallelism, now_};
    const FunctionalUnit& cur = a.graph->unit(v.unit_id);
    std::optional<FirstHop> hop;
    if (cur.successors.count(next_unit)) {
      auto cd = conditional_filter(a.graph->unit(next_unit), obs, cur,
                                   {cfg_.scheduler.min_conditional_samples});
      hop = make_first_hop(cd);
    }
    estimate(id, a.compiled->index_of(next_unit), hop ? &*hop : nullptr);
    refresh();
  }
  start_visit(id, next);
  dispatch_all();
}

void Simulator::on_app_complete(const Event& e) {
  const std::uint64_t id = e.target;
  AppState& a = apps_[id];
  log(e, fmt::format("app={}", id));
  sync(id);
  resolve_plans(id, std::string{});
  a.plans.clear();
  const ApplicationInstance& in = inst(id);
  AppOutcome out;
  out.id = id;
  out.app_id = in.app_id;
  out.size_class = a.arrival->size_class;
  out.tenant = in.tenant;
  out.arrival = in.arrival_time;
  out.completion = now_;
  out.deadline = in.deadline;
  out.deadline_class = a.arrival->deadline_class;
  out.overrun = a.overrun;
  out.service = in.attained_service;
  result_.apps.push_back(std::move(out));
  a.done = true;
  // Swap-remove from the live set.
  const std::size_t pos = a.live_pos;
  const std::size_t last = live_.size() - 1;
  if (pos != last) {
    live_[pos] = std::move(live_[last]);
    live_ids_[pos] = live_ids_[last];
    apps_[live_ids_[pos]].live_pos = pos;
  }
  live_.pop_back();
  live_ids_.pop_back();
  dispatch_all();
}

void Simulator::on_prewarm_trigger(const Event& e) {
  PlanState& p = plans_[e.target];
  if (p.status != PlanStatus::Pending) return;
  log(e, fmt::format("app={} target={}", p.app, p.plan.target_unit));
  const std::string content = *p.plan.target.warm_content();
  p.plan.trigger_time = now_;
  if (p.llm_target) {
    Engine& eng = engines_[p.engine];
    PrefetchContext ctx{PrefetchTrigger::PlanTrigger, now_, &p.plan};
    if (!cache_prefetch_signal(*eng.cache, content, p.plan.target.content_bytes,
                               eng.cache->policy(), ctx)) {
      p.status = PlanStatus::Dropped;
      return;
    }
    // Not yet requested: ranks behind everything already queued.
    const auto needed = need_ranks(eng);
    eng.cache->prefetch(content, p.plan.target.content_bytes, p.plan.t_p, now_, &needed,
                        static_cast<double>(eng.waiting.size()));
  } else {
    Pool& pool = pool_for(p.plan.target.kind);
    purge(pool);
    for (const auto& in : pool.instances) {
      if (in.alive && !in.busy && !in.reserved_for && in.content == content) {
        p.status = PlanStatus::Dropped;  // already warm
        return;
      }
    }
    if (!pool_has_room(pool)) {
      p.status = PlanStatus::Dropped;
      return;
    }
    p.instance = create_instance(pool, content, now_ + p.plan.t_p);
    pool.instances[p.instance].reserved_for = e.target;
  }
  p.status = PlanStatus::Triggered;
  schedule(now_ + p.plan.t_p, EventKind::PrewarmComplete, e.target);
}

void Simulator::on_priority_refresh(const Event& e) {
  const std::uint64_t id = e.target;
  if (apps_[id].done) return;
  log(e, fmt::format("app={}", id));
  refresh();
  schedule(now_ + inst(id).bucket_period, EventKind::PriorityRefresh, id);
  dispatch_all();
}

SimResult Simulator::run() {
  cfg_.env.validate();
  const auto& s = cfg_.scheduler;
  if (s.bucket_count < 1) throw Error("bucket_count must be positive");
  if (s.mc_samples < 1) throw Error("mc_samples must be positive");
  if (!(s.hysteresis >= 1.0)) throw Error("hysteresis must be >= 1");
  if (!(cfg_.prewarm.knob >= 0 && cfg_.prewarm.knob <= 1)) {
    throw Error("prewarm knob must be in [0,1]");
  }
  const bool needs_deadline = s.policy == Policy::Lstf || s.policy == Policy::Edf;
  for (std::size_t i = 0; i < w_.arrivals.size(); ++i) {
    const auto& a = w_.arrivals[i];
    if (i > 0 && a.time < w_.arrivals[i - 1].time) throw Error("arrivals are not sorted");
    if (!(a.time >= 0)) throw Error("arrival " + std::to_string(i) + " has negative time");
    auto g = graphs_.find(a.app_id);
    if (g == graphs_.end()) throw Error("unknown application '" + a.app_id + "'");
    if (needs_deadline && !a.deadline) {
      throw Error(std::string(to_string(s.policy)) + " requires deadlines (arrival " +
                  std::to_string(i) + ")");
    }
    if (!compiled_.count(a.app_id)) {
      g->second.validate();
      compiled_.emplace(a.app_id, std::make_unique<CompiledGraph>(
                                      g->second, s.min_conditional_samples));
    }
  }
  for (const auto& ec : cfg_.env.engines) {
    Engine eng;
    eng.cfg = ec;
    if (ec.cache_capacity > 0) eng.cache.emplace(ec.cache_capacity, ec.cache_policy);
    engines_.push_back(std::move(eng));
  }
  runs_ = draw_true_runs(w_, graphs_, cfg_.seed, cfg_.demand_scale);
  apps_.resize(w_.arrivals.size());
  for (std::size_t i = 0; i < w_.arrivals.size(); ++i) {
    schedule(w_.arrivals[i].time, EventKind::Arrival, i);
  }
  while (!queue_.empty()) {
    const Event e = queue_.top();
    queue_.pop();
    now_ = e.time;
    switch (e.kind) {
      case EventKind::Arrival: on_arrival(e); break;
      case EventKind::TaskDispatch: on_task_dispatch(e); break;
      case EventKind::TaskComplete: on_task_complete(e); break;
      case EventKind::TaskPreempt: on_task_preempt(e); break;
      case EventKind::UnitComplete: on_unit_complete(e); break;
      case EventKind::AppComplete: on_app_complete(e); break;
      case EventKind::PrewarmTrigger: on_prewarm_trigger(e); break;
      case EventKind::PrewarmComplete:
        if (plans_[e.target].status == PlanStatus::Triggered ||
            plans_[e.target].status == PlanStatus::Resolved) {
          log(e, fmt::format("app={} target={}", plans_[e.target].app,
                             plans_[e.target].plan.target_unit));
        }
        break;
      case EventKind::PriorityRefresh: on_priority_refresh(e); break;
    }
  }
  result_.horizon = now_;
  for (const auto& eng : engines_) {
    result_.engine_busy.push_back(eng.busy);
    if (eng.cache) {
      result_.cache_hits += eng.cache->hits();
      result_.cache_accesses += eng.cache->accesses();
    }
  }
  std::vector<PlanOutcome> outcomes;
  for (const auto& p : plans_) {
    if (p.status != PlanStatus::Resolved) continue;
    outcomes.push_back({p.plan, p.arrival, p.cancel});
  }
  result_.wastage = wastage_accounting(outcomes);
  std::sort(result_.apps.begin(), result_.apps.end(),
            [](const AppOutcome& x, const AppOutcome& y) { return x.id < y.id; });
  return std::move(result_);
}

}  // namespace

SimResult simulate(const WorkloadSpec& workload,
                   const std::map<std::string, PDGraph>& graphs,
                   const SimConfig& config) {
  Simulator sim(workload, graphs, config);
  return sim.run();
}

}  // namespace pdsim
