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

#include <benchmark/benchmark.h>

#include <vector>

#include "pdsim/estimator.hpp"
#include "pdsim/sched.hpp"
#include "pdsim/workload.hpp"

namespace {

const pdsim::PDGraph& graph() {
  static const pdsim::PDGraph g = [] {
    pdsim::ArchetypeParams p;
    p.trials = 500;
    return pdsim::archetype(pdsim::ArchetypeKind::CodeCheck, p, 11);
  }();
  return g;
}

template <bool Parallel>
void BM_RandomWalks(benchmark::State& state) {
  pdsim::CompiledGraph cg(graph());
  pdsim::kernels::WalkJob job;
  job.graph = &cg;
  job.start = cg.entry();
  job.seed = 3;
  std::vector<double> out(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(pdsim::kernels::random_walks_parallel(job, out));
    } else {
      benchmark::DoNotOptimize(pdsim::kernels::random_walks_serial(job, out));
    }
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

std::vector<pdsim::ApplicationInstance> instances(std::size_t n, std::size_t buckets) {
  pdsim::SplitMix64 rng(5);
  std::vector<pdsim::ApplicationInstance> live(n);
  for (std::size_t i = 0; i < n; ++i) {
    pdsim::RemainingDemand d;
    for (int k = 0; k < 1000; ++k) d.samples.push_back(1.0 + 100.0 * rng.uniform());
    live[i].id = i;
    live[i].set_remaining(std::move(d), buckets);
    live[i].attained_service = 10.0 * rng.uniform();
  }
  return live;
}

template <bool Parallel>
void BM_Refresh(benchmark::State& state) {
  auto live = instances(static_cast<std::size_t>(state.range(0)),
                        static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    for (auto& a : live) a.observation_pending = true;
    if constexpr (Parallel) {
      pdsim::kernels::refresh_parallel(live, 1.0, pdsim::Policy::Gittins, {});
    } else {
      pdsim::kernels::refresh_serial(live, 1.0, pdsim::Policy::Gittins, {});
    }
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_RandomWalks<false>)->Arg(1000)->Arg(100000);
BENCHMARK(BM_RandomWalks<true>)->Arg(1000)->Arg(100000);
BENCHMARK(BM_Refresh<false>)->Args({1000, 10})->Args({10000, 10})->Args({1000, 40});
BENCHMARK(BM_Refresh<true>)->Args({1000, 10})->Args({10000, 10})->Args({1000, 40});

BENCHMARK_MAIN();
