// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "tcmgc/model.hpp"
#include "tcmgc/ops.hpp"
#include "tcmgc/synthetic.hpp"
#include "tcmgc/train.hpp"

namespace tcmgc {
namespace {

Tensor uniform(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor::from(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = uniform(rng, {n, n});
  const Tensor b = uniform(rng, {n, n});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

RunConfig toy(const SyntheticCorpus& corpus) {
  RunConfig config = parse_config("lr = 0.01\nsteps = 500\ntemporal_layers = 1\ntemporal_heads = 4\n");
  return adopt_dimensions(config, corpus.texts, corpus.videos);
}

void BM_ScoreGrid(benchmark::State& state) {
  const auto pairs = static_cast<std::size_t>(state.range(0));
  const SyntheticCorpus corpus = generate_synthetic({.seed = 2, .pairs = pairs});
  const ModelConfig config = ModelConfig::from(toy(corpus));
  Rng rng(3);
  const ModelParams params = ModelParams::init(config, rng);
  const auto texts = corpus.texts.texts();
  const auto videos = corpus.videos.videos();
  for (auto _ : state) benchmark::DoNotOptimize(score_grid(params, config, texts, videos).final.data());
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * pairs * pairs));
}
BENCHMARK(BM_ScoreGrid)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto pairs = static_cast<std::size_t>(state.range(0));
  const SyntheticCorpus corpus = generate_synthetic({.seed = 4, .pairs = pairs});
  Trainer trainer(toy(corpus), corpus.texts.texts(), corpus.videos.videos());
  for (auto _ : state) {
    if (trainer.done()) {
      state.PauseTiming();
      trainer = Trainer(toy(corpus), corpus.texts.texts(), corpus.videos.videos());
      state.ResumeTiming();
    }
    benchmark::DoNotOptimize(trainer.step_once().total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace tcmgc

// The packaged benchmark_main archive carries LTO objects from another compiler.
BENCHMARK_MAIN();
