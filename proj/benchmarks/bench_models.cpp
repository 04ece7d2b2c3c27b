#include <benchmark/benchmark.h>

#include "synthetic.hpp"
#include "vlce/models.hpp"

using namespace vlce;

namespace {

template <class Model, class Config>
void run_step(benchmark::State& state, Config cfg, std::size_t image_dim) {
  const auto corpus = synthetic::make_corpus(static_cast<std::size_t>(state.range(0)), image_dim, 1, 16);
  const auto emb = synthetic::make_embedding(corpus.vocab, 300, 2);
  Model m(cfg, corpus.vocab.index_space(), &emb, 3);
  const auto batches = make_batches(corpus.records, corpus.features, corpus.vocab, corpus.records.size(), 1);
  auto params = m.parameters();
  for (auto _ : state) {
    nn::zero_grads(params);
    auto loss = m.batch_loss(batches.front(), true, 4);
    loss.backward();
    benchmark::DoNotOptimize(loss.item());
  }
}

void BM_TransformerStep(benchmark::State& state) {
  TransformerConfig cfg;
  cfg.image_dim = 768;
  run_step<TransformerCaptioner>(state, cfg, 768);
}
BENCHMARK(BM_TransformerStep)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_LstmStep(benchmark::State& state) {
  LstmConfig cfg;
  run_step<LstmCaptioner>(state, cfg, cfg.image_dim);
}
BENCHMARK(BM_LstmStep)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
