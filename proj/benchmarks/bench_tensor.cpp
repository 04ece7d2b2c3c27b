#include <benchmark/benchmark.h>

#include "vlce/layers.hpp"
#include "vlce/rng.hpp"

using namespace vlce;
using namespace vlce::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_tensor({n, 300}, rng), b = random_tensor({300, 300}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 300 * 300));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void BM_SelfAttention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  auto w = AttentionWeights::create(300, rng);
  const auto x = random_tensor({t, 300}, rng);
  const auto mask = causal_mask(t);
  for (auto _ : state) benchmark::DoNotOptimize(multi_head_attention(x, x, w, 6, mask));
}
BENCHMARK(BM_SelfAttention)->Arg(8)->Arg(32);

void BM_LstmForward(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  auto w = LstmWeights::create(300, 256, rng);
  const auto x = random_tensor({t, 300}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(lstm_forward(x, w).outputs);
}
BENCHMARK(BM_LstmForward)->Arg(8)->Arg(32);

}  // namespace
