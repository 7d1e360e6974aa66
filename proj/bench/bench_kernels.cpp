// Copyright 2026 The CSP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference vs OpenMP kernels on a synthetic dataset.
//
//   OMP_NUM_THREADS=4 ./bench_kernels

#include <benchmark/benchmark.h>

#include <map>

#include "csp/kernels.hpp"
#include "csp/training.hpp"

using namespace csp;

namespace {

struct Fixture {
  data::Dataset data;
  taggers::Model model;
};

const Fixture& fixture(taggers::ModelType type) {
  static std::map<taggers::ModelType, Fixture> cache;
  auto it = cache.find(type);
  if (it != cache.end()) return it->second;
  auto [d, spec] = data::generate_hmm(9, 200, 2000, {5, 30}, 7);
  training::TrainConfig cfg;
  cfg.features = taggers::FeatureKind::kWindow;
  cfg.hash_buckets = 4096;
  Fixture f{std::move(d), {}};
  f.model = training::init_model(type, training::make_feature_map(cfg, f.data.obs_vocab_size), 9, 0.3, 1);
  return cache.emplace(type, std::move(f)).first->second;
}

template <bool kParallel>
void BM_ObjectiveAndGradient(benchmark::State& state) {
  const auto& f = fixture(static_cast<taggers::ModelType>(state.range(0)));
  taggers::Model grad = taggers::zeros_like(f.model);
  const kernels::Objective obj;
  for (auto _ : state) {
    const double v = kParallel ? kernels::objective_and_gradient(f.model, f.data, obj, grad)
                               : kernels::objective_and_gradient_serial(f.model, f.data, obj, grad);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.data.total_tokens));
}

template <bool kParallel>
void BM_BatchDistributions(benchmark::State& state) {
  const auto& f = fixture(static_cast<taggers::ModelType>(state.range(0)));
  for (auto _ : state) {
    auto d = kParallel ? kernels::batch_distributions(f.model, f.data)
                       : kernels::batch_distributions_serial(f.model, f.data);
    benchmark::DoNotOptimize(d.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.data.total_tokens));
}

void model_types(benchmark::internal::Benchmark* b) {
  for (auto t : {taggers::ModelType::kIid, taggers::ModelType::kCrf, taggers::ModelType::kAr})
    b->Arg(static_cast<int>(t));
  b->ArgName("type")->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ObjectiveAndGradient<false>)->Apply(model_types);
BENCHMARK(BM_ObjectiveAndGradient<true>)->Apply(model_types);
BENCHMARK(BM_BatchDistributions<false>)->Apply(model_types);
BENCHMARK(BM_BatchDistributions<true>)->Apply(model_types);

BENCHMARK_MAIN();
