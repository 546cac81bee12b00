#include <benchmark/benchmark.h>

#include "balltrain/attacks.hpp"
#include "balltrain/gemm.hpp"
#include "balltrain/models.hpp"
#include "balltrain/rng.hpp"

using namespace balltrain;

namespace {

Tensor<float> random_batch(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data) v = float(rng.uniform01());
  return t;
}

void BM_GemmF32(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  std::vector<float> a(n * n), b(n * n), c(n * n);
  Rng rng(1);
  for (auto& v : a) v = float(rng.uniform01());
  for (auto& v : b) v = float(rng.uniform01());
  for (auto _ : state) {
    gemm_nn(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(2 * n * n * n));
}
BENCHMARK(BM_GemmF32)->Arg(256)->Arg(512)->Arg(1024);

void BM_LeNetForwardBackward(benchmark::State& state) {
  const std::size_t B = std::size_t(state.range(0));
  auto arch = Architecture::lenet(1, 28, 28, 10);
  auto model = init_model<float>(arch, 7);
  Tensor<float> batch = random_batch({B, 1, 28, 28}, 2);
  std::vector<int> labels(B, 3);
  for (auto _ : state) {
    Tape<float> tape;
    auto pv = leaf_params(tape, model, true);
    auto b = tape.leaf(batch, false);
    auto loss = tape.softmax_cross_entropy(forward(tape, pv, arch, b), labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(pv[0]).data.data());
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(B));
}
BENCHMARK(BM_LeNetForwardBackward)->Arg(64);

void BM_Pgd20Batch(benchmark::State& state) {
  const std::size_t B = 32;
  auto arch = Architecture::lenet(1, 28, 28, 10);
  auto model = init_model<float>(arch, 7);
  Tensor<float> batch = random_batch({B, 1, 28, 28}, 3);
  std::vector<int> labels(B, 1);
  AttackConfig cfg;
  cfg.epsilon = 0.3;
  cfg.step_eta = 0.05;
  cfg.iterations = 20;
  for (auto _ : state) {
    auto adv = pgd(model, batch, labels, cfg);
    benchmark::DoNotOptimize(adv.data.data());
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(B));
}
BENCHMARK(BM_Pgd20Batch);

}  // namespace

BENCHMARK_MAIN();
