#include <benchmark/benchmark.h>

#include "vildistill/data.hpp"
#include "vildistill/evaluation.hpp"
#include "vildistill/info_losses.hpp"
#include "vildistill/rng.hpp"
#include "vildistill/target_model.hpp"

namespace {

using namespace vildistill;

Mat bench_logits(int batch, int classes, uint64_t seed) {
  Rng rng(seed);
  Mat m(batch, classes);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < classes; ++c) m(b, c) = rng.gaussian();
  }
  return m;
}

void BM_softmax_rows(benchmark::State& state) {
  const Mat logits = bench_logits(static_cast<int>(state.range(0)), 10, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_rows(logits, 1.0));
  }
}
BENCHMARK(BM_softmax_rows)->Arg(64)->Arg(256);

void BM_tsc_loss_with_grad(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const Mat pt = softmax_rows(bench_logits(batch, 10, 2), 1.0);
  const Mat pv = softmax_rows(bench_logits(batch, 10, 3), 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsc_loss_with_grad(pt, pv, true));
  }
}
BENCHMARK(BM_tsc_loss_with_grad)->Arg(64)->Arg(256);

void BM_mce_loss_with_grad(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const Mat logits = bench_logits(batch, 10, 4);
  std::vector<LikelySet> sets;
  Rng rng(5);
  for (int b = 0; b < batch; ++b) {
    const int first = rng.uniform_int(10);
    const int second = (first + 1 + rng.uniform_int(9)) % 10;
    sets.push_back({first, second});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(mce_loss_with_grad(logits, sets, 0.1));
  }
}
BENCHMARK(BM_mce_loss_with_grad)->Arg(64)->Arg(256);

void BM_target_forward(benchmark::State& state) {
  TargetModelConfig cfg;
  TargetModel model(cfg);
  model.set_training(false);
  const Mat x = bench_logits(static_cast<int>(state.range(0)), cfg.input_dim, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(x));
  }
}
BENCHMARK(BM_target_forward)->Arg(64)->Arg(2000);

void BM_mmd(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Mat x = bench_logits(n, 10, 7);
  const Mat y = bench_logits(n, 10, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mmd(x, y, 2.0));
  }
}
BENCHMARK(BM_mmd)->Arg(128)->Arg(512);

void BM_generate_shift_pair(benchmark::State& state) {
  ShiftSpec spec;
  spec.samples_per_class = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_shift_pair(spec));
  }
}
BENCHMARK(BM_generate_shift_pair)->Arg(50)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
