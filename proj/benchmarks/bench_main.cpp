#include <benchmark/benchmark.h>

#include "gsnet/attention.hpp"
#include "gsnet/kernels.hpp"
#include "gsnet/model.hpp"
#include "gsnet/random.hpp"

using namespace gsnet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(std::move(shape), std::move(d));
}

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    kernels::gemm(n, n, n, a.data().data(), false, b.data().data(), false, c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = random_tensor({16, c, 16, 16}, 3), w = random_tensor({c, c, 3, 3}, 4);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, std::nullopt, 1, 1));
}
BENCHMARK(BM_Conv3x3)->Arg(24)->Arg(48);

void BM_WindowAttention(benchmark::State& state) {
  const std::size_t shift = static_cast<std::size_t>(state.range(0));
  AttentionConfig cfg{48, 3, 4};
  Rng rng(5);
  auto params = WindowAttentionParams::init(cfg, rng);
  auto x = random_tensor({16, 8, 8, 48}, 6);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(window_attention(x, shift, params, cfg));
}
BENCHMARK(BM_WindowAttention)->Arg(0)->Arg(2);

void BM_ModelForward(benchmark::State& state) {
  auto model = build_model(ModelConfig{}, 7);
  auto x = random_tensor({16, 1, 32, 32}, 8);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, x));
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto model = build_model(ModelConfig{}, 7);
  auto x = random_tensor({16, 1, 32, 32}, 8);
  std::vector<std::size_t> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 4;
  for (auto _ : state) {
    backward(cross_entropy(forward(model, x), labels));
    for (auto& [name, p] : model.parameters()) p.zero_grad();
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
