#include <benchmark/benchmark.h>

#include "vlce/feature_store.hpp"
#include "vlce/rng.hpp"

using namespace vlce;

namespace {

FeatureStore make_store(std::size_t count, std::size_t dim) {
  Rng rng(5);
  FeatureStore s(dim);
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& x : v) x = static_cast<float>(rng.uniform(0.0, 1.0));
    s.add("img_" + std::to_string(i), v);
  }
  return s;
}

void BM_VlcfSerialize(benchmark::State& state) {
  const auto s = make_store(static_cast<std::size_t>(state.range(0)), 768);
  for (auto _ : state) benchmark::DoNotOptimize(s.serialize());
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(s.serialize().size()));
}
BENCHMARK(BM_VlcfSerialize)->Arg(1000);

void BM_VlcfDeserialize(benchmark::State& state) {
  const auto bytes = make_store(static_cast<std::size_t>(state.range(0)), 768).serialize();
  for (auto _ : state) benchmark::DoNotOptimize(FeatureStore::deserialize(bytes));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_VlcfDeserialize)->Arg(1000);

}  // namespace
