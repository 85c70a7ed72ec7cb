/* Copyright 2026 The pbe-fixer Authors. All Rights Reserved.

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

// Serial reference vs task-parallel paths. Arg 0 is serial; any other
// value is the worker count.

#include <benchmark/benchmark.h>

#include "pbe/parallel.hpp"
#include "pbe/search.hpp"
#include "pbe/taskgen.hpp"
#include "pbe/train.hpp"

namespace {

pbe::Exec exec_for(const benchmark::State& state) {
  const auto workers = static_cast<int>(state.range(0));
  return workers == 0 ? pbe::Exec::serial() : pbe::Exec::threads(workers);
}

void BM_GenerateTasks(benchmark::State& state) {
  pbe::GenConfig config;
  config.max_expressions = 3;
  config.max_io_len = 30;
  for (auto _ : state) {
    auto tasks = pbe::generate_tasks(config, pbe::SeedDomain::Corpus, 0, 256, exec_for(state));
    benchmark::DoNotOptimize(tasks);
  }
  state.SetItemsProcessed(state.iterations() * 256);
}

void BM_EvaluateFixer(benchmark::State& state) {
  pbe::TrainConfig config;
  config.gen.max_expressions = 3;
  config.gen.max_io_len = 30;
  const pbe::TrainState train = pbe::initial_state(config);
  const pbe::NeuralSynthesizer model(train.params, config.seeded_model());
  const auto tasks = pbe::generate_tasks(config.seeded_gen(), pbe::SeedDomain::Corpus, 0, 32);
  pbe::SearchConfig search;
  search.budget = 3;
  search.inner_beam = 4;
  search.max_tokens = 40;
  for (auto _ : state) {
    auto r = pbe::evaluate(model, tasks, search, pbe::SearchMethod::Fixer, exec_for(state));
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}

}  // namespace

BENCHMARK(BM_GenerateTasks)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateFixer)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
