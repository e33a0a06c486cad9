#include <benchmark/benchmark.h>

#include <random>

#include "more/gcr.hpp"
#include "more/lir.hpp"
#include "more/trainer.hpp"

using namespace more;

namespace {

Tensor randn(std::mt19937_64& rng, Shape shape) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

void BM_GcrForward(benchmark::State& state) {
  const std::size_t c = 3, l = 64, d = 32;
  std::mt19937_64 rng(1);
  const Tensor tok = randn(rng, {c, d});
  const Tensor pat = randn(rng, {l, d});
  const ParamSet params = init_gcr_params(d, 7);
  for (auto _ : state) {
    Tape t;
    ParamVars pv(t, params);
    GcrOutput out = gcr_forward(t.constant(tok), t.constant(pat), pv, l / 2);
    benchmark::DoNotOptimize(out.q.value().data());
  }
}
BENCHMARK(BM_GcrForward);

void BM_KernelSearch(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> kind(0, 3);
  RelationMaps maps;
  maps.n_h = 8;
  maps.n_w = 8;
  maps.confident.assign(64, 0);
  maps.uncertain.assign(64, 0);
  for (std::size_t p = 0; p < 64; ++p) {
    const int k = kind(rng);
    if (k == 1) maps.confident[p] = 1;
    if (k == 2) maps.uncertain[p] = 1;
  }
  for (auto _ : state) {
    UncertainSet sel = kernel_search(maps, 3, 1.2);
    benchmark::DoNotOptimize(sel.flat.data());
  }
}
BENCHMARK(BM_KernelSearch);

void BM_EncodeSample(benchmark::State& state) {
  RunConfig cfg;
  cfg.train_samples = 4;
  cfg.val_samples = 4;
  cfg.validate();
  Trainer trainer(cfg);
  const SyntheticSample sample = trainer.train_split()[0];
  for (auto _ : state) {
    SampleForward f = trainer.forward_sample(sample);
    benchmark::DoNotOptimize(f.pseudo.data());
  }
}
BENCHMARK(BM_EncodeSample);

void BM_TrainStep(benchmark::State& state) {
  RunConfig cfg;
  cfg.train_samples = 16;
  cfg.val_samples = 4;
  cfg.warmup_steps = 0;
  cfg.validate();
  Trainer trainer(cfg);
  for (auto _ : state) {
    LossReport r = trainer.train_step();
    benchmark::DoNotOptimize(r.l_total);
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
