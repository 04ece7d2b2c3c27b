#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"
#include "vlce/io.hpp"
#include "vlce/models.hpp"

using namespace vlce;
using namespace vlce::nn;

namespace {

TransformerConfig small_transformer(std::size_t image_dim = 16) {
  TransformerConfig c;
  c.image_dim = image_dim;
  c.model_dim = c.emb_dim = 24;
  c.layers = 1;
  c.heads = 2;
  c.dropout = 0.0;
  return c;
}

LstmConfig small_lstm(std::size_t image_dim = 16) {
  LstmConfig c;
  c.image_dim = image_dim;
  c.emb_dim = 8;
  c.hidden = c.fusion_dim = 10;
  c.dropout = 0.0;
  return c;
}

std::vector<float> random_image(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.uniform(0.0, 1.0));
  return v;
}

void zero_all(const ParameterList& ps) {
  for (auto p : ps) {
    for (auto& v : p.value.mutable_data()) v = 0.0;
  }
}

}  // namespace

TEST(Transformer, DefaultVisualMemoryIs17x300) {
  TransformerConfig c;
  c.image_dim = 768;
  TransformerCaptioner m(c, 31, nullptr, 1);
  const auto mem = m.encode_visual(random_image(768, 2));
  EXPECT_EQ(mem.dim(0), 17u);
  EXPECT_EQ(mem.dim(1), 300u);
  zero_all(m.parameters());
  const auto zero = m.encode_visual(std::vector<float>(768, 0.0f));
  for (double v : zero.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_VLCE_ERROR(m.encode_visual(std::vector<float>(10, 0.0f)), ErrorKind::kShape);
}

TEST(Transformer, VisualMemoryMatchesOracle) {
  TransformerCaptioner m(small_transformer(), 10, nullptr, 3);
  const auto img = random_image(16, 4);
  const auto got = oracle::to_mat(m.encode_visual(img));
  const auto expected = oracle::visual_memory(m, img);
  ASSERT_EQ(got.size(), 17u);
  for (std::size_t i = 0; i < 17; ++i) {
    for (std::size_t j = 0; j < 24; ++j) EXPECT_NEAR(got[i][j], expected[i][j], 1e-9);
  }
}

TEST(Transformer, LogitsMatchOracle) {
  auto c = small_transformer();
  c.layers = 2;
  const auto corpus = synthetic::make_corpus(2, 16, 5);
  const auto emb = synthetic::make_embedding(corpus.vocab, 24, 6, 0.3);
  TransformerCaptioner m(c, corpus.vocab.index_space(), &emb, 7);
  const auto img = random_image(16, 8);
  const std::vector<std::int32_t> tokens{corpus.vocab.start_index(), 3, 9, 1};
  Rng rng(0);
  const auto got = oracle::to_mat(m.sequence_logits(img, tokens, false, rng));
  const auto expected = oracle::transformer_logits(m, img, tokens);
  ASSERT_EQ(got.size(), 4u);
  ASSERT_EQ(got[0].size(), corpus.vocab.index_space());
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < got[t].size(); ++j) EXPECT_NEAR(got[t][j], expected[t][j], 1e-9);
  }
}

TEST(Transformer, OneLayerOneHeadThreeTokenVocab) {
  auto c = small_transformer(4);
  c.model_dim = c.emb_dim = 12;
  c.heads = 1;
  TransformerCaptioner m(c, 4, nullptr, 9);
  // small hand-set weights
  std::size_t k = 0;
  for (auto p : m.parameters()) {
    for (auto& v : p.value.mutable_data()) v = 0.05 * std::sin(0.37 * static_cast<double>(k++));
  }
  const std::vector<float> img{0.1f, 0.4f, 0.2f, 0.9f};
  const std::vector<std::int32_t> tokens{1, 2, 3};
  Rng rng(0);
  const auto got = oracle::to_mat(m.sequence_logits(img, tokens, false, rng));
  const auto expected = oracle::transformer_logits(m, img, tokens);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got[t][j], expected[t][j], 1e-9);
  }
}

TEST(Transformer, Causality) {
  TransformerCaptioner m(small_transformer(), 12, nullptr, 10);
  const auto img = random_image(16, 11);
  Rng rng(0);
  std::vector<std::int32_t> tokens{10, 2, 3, 4, 5};
  const auto base = oracle::to_mat(m.sequence_logits(img, tokens, false, rng));
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    auto changed = tokens;
    for (std::size_t u = t; u < changed.size(); ++u) changed[u] = static_cast<std::int32_t>(1 + (changed[u] + 3) % 11);
    const auto out = oracle::to_mat(m.sequence_logits(img, changed, false, rng));
    for (std::size_t p = 0; p < t; ++p) {
      for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(out[p][j], base[p][j], 1e-5);
    }
  }
  EXPECT_VLCE_ERROR(m.sequence_logits(img, std::vector<std::int32_t>{12}, false, rng), ErrorKind::kVocab);
}

TEST(Transformer, ConfigValidation) {
  auto c = small_transformer();
  c.heads = 5;
  EXPECT_VLCE_ERROR(c.validate(), ErrorKind::kConfig);
  c = small_transformer();
  c.emb_dim = 30;
  EXPECT_VLCE_ERROR(c.validate(), ErrorKind::kConfig);
  c = small_transformer();
  c.dropout = 1.0;
  EXPECT_VLCE_ERROR(c.validate(), ErrorKind::kConfig);
}

TEST(Lstm, DistributionSumsToOneAndMatchesOracle) {
  const auto corpus = synthetic::make_corpus(2, 16, 12);
  const auto emb = synthetic::make_embedding(corpus.vocab, 8, 13);
  LstmCaptioner m(small_lstm(), corpus.vocab.index_space(), &emb, 14);
  const auto img = random_image(16, 15);
  const std::vector<std::int32_t> prefix{corpus.vocab.start_index(), 4, 7};
  const auto p = m.predict(img, prefix);
  double sum = 0;
  for (double v : p) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto expected = oracle::lstm_distribution(m, img, prefix);
  for (std::size_t j = 0; j < p.size(); ++j) EXPECT_NEAR(p[j], expected[j], 1e-9);
}

TEST(Lstm, ZeroWeightsGiveUniformOutput) {
  LstmCaptioner m(small_lstm(), 9, nullptr, 16);
  zero_all(m.parameters());
  const auto p = m.predict(std::vector<float>(16, 0.0f), std::vector<std::int32_t>{1, 2});
  for (double v : p) EXPECT_NEAR(v, 1.0 / 9.0, 1e-12);
}

TEST(Batches, TeacherForcingLayout) {
  auto corpus = synthetic::make_corpus(1, 4, 17, 8);
  corpus.records[0].clean_tokens = {"road"};
  const auto batches = make_batches(corpus.records, corpus.features, corpus.vocab, 4, 1);
  ASSERT_EQ(batches.size(), 1u);
  const auto& b = batches[0];
  EXPECT_EQ(b.seq_len, 7u);
  const auto road = corpus.vocab.index("road");
  EXPECT_EQ(std::vector<std::int32_t>(b.input_row(0).begin(), b.input_row(0).end()),
            (std::vector<std::int32_t>{corpus.vocab.start_index(), road, 0, 0, 0, 0, 0}));
  EXPECT_EQ(std::vector<std::int32_t>(b.target_row(0).begin(), b.target_row(0).end()),
            (std::vector<std::int32_t>{road, corpus.vocab.end_index(), 0, 0, 0, 0, 0}));
  EXPECT_EQ(b.mask, (std::vector<double>{1, 1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(b.length(0), 2u);
}

TEST(Batches, SizesAndDeterminism) {
  const auto corpus = synthetic::make_corpus(65, 4, 18);
  const auto a = make_batches(corpus.records, corpus.features, corpus.vocab, 32, 5);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].size, 32u);
  EXPECT_EQ(a[1].size, 32u);
  EXPECT_EQ(a[2].size, 1u);
  const auto b = make_batches(corpus.records, corpus.features, corpus.vocab, 32, 5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].ids, b[i].ids);
  const auto c = make_batches(corpus.records, corpus.features, corpus.vocab, 32, 6);
  EXPECT_NE(a[0].ids, c[0].ids);

  auto flagged = corpus.records;
  flagged[3].missing_feature = true;
  EXPECT_VLCE_ERROR(make_batches(flagged, corpus.features, corpus.vocab, 32, 5), ErrorKind::kData);
}

TEST(Batches, LongCaptionTruncatedNotDropped) {
  auto corpus = synthetic::make_corpus(2, 4, 19, 5);
  corpus.records[0].clean_tokens = {"road", "river", "roof", "rubble", "smoke", "street"};
  const auto batches = make_batches(corpus.records, corpus.features, corpus.vocab, 8, 1);
  ASSERT_EQ(batches[0].size, 2u);
  EXPECT_EQ(batches[0].seq_len, 4u);
}

TEST(Train, ZeroLearningRateKeepsLoss) {
  const auto corpus = synthetic::make_corpus(6, 16, 20);
  const auto emb = synthetic::make_embedding(corpus.vocab, 24, 21);
  TransformerCaptioner m(small_transformer(), corpus.vocab.index_space(), &emb, 22);
  TrainSchedule s;
  s.phase1 = {0.0, 3};
  s.phase2 = {0.0, 0};
  s.batch_size = 4;
  const auto r = train(m, s, {corpus.records, corpus.features, corpus.vocab});
  ASSERT_EQ(r.curve.size(), 4u);
  for (const auto& rec : r.curve) EXPECT_NEAR(rec.loss, r.curve[0].loss, 1e-9);
}

TEST(Train, InitialLossNearUniform) {
  const auto corpus = synthetic::make_corpus(8, 16, 23);
  const auto emb = synthetic::make_embedding(corpus.vocab, 24, 24);
  const double uniform = std::log(static_cast<double>(corpus.vocab.index_space()));
  TransformerCaptioner t(small_transformer(), corpus.vocab.index_space(), &emb, 25);
  LstmCaptioner l(small_lstm(), corpus.vocab.index_space(), nullptr, 26);
  TrainSchedule s;
  s.phase1 = {1e-3, 0};
  s.phase2 = {1e-4, 0};
  for (CaptionModel* m : std::initializer_list<CaptionModel*>{&t, &l}) {
    const auto r = train(*m, s, {corpus.records, corpus.features, corpus.vocab});
    ASSERT_EQ(r.curve.size(), 1u);
    EXPECT_EQ(r.curve[0].phase, 0);
    EXPECT_NEAR(r.curve[0].loss, uniform, 0.1 * uniform) << m->kind();
  }
}

TEST(Train, LossDecreasesAndIsReproducible) {
  const auto corpus = synthetic::make_corpus(4, 16, 27);
  auto run = [&] {
    LstmCaptioner m(small_lstm(), corpus.vocab.index_space(), nullptr, 28);
    TrainSchedule s;
    s.phase1 = {1e-2, 10};
    s.phase2 = {1e-3, 2};
    s.batch_size = 2;
    int phases = 0;
    const auto r = train(m, s, {corpus.records, corpus.features, corpus.vocab}, [&](int, const Adam&) { ++phases; });
    EXPECT_EQ(phases, 2);
    return r;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.curve.size(), 13u);
  EXPECT_LT(a.curve.back().loss, a.curve.front().loss);
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
  EXPECT_EQ(a.curve[11].phase, 2);
}

TEST(Train, NonFiniteLossAborts) {
  const auto corpus = synthetic::make_corpus(4, 16, 29);
  LstmCaptioner m(small_lstm(), corpus.vocab.index_space(), nullptr, 30);
  m.head.bias.mutable_data()[3] = std::numeric_limits<double>::quiet_NaN();
  TrainSchedule s;
  s.phase1 = {1e-3, 1};
  s.phase2 = {1e-4, 0};
  EXPECT_VLCE_ERROR(train(m, s, {corpus.records, corpus.features, corpus.vocab}), ErrorKind::kNumeric);
}

TEST(Train, ScheduleValidation) {
  TrainSchedule s;
  s.phase2.learning_rate = s.phase1.learning_rate;
  EXPECT_VLCE_ERROR(s.validate(), ErrorKind::kConfig);
  s = TrainSchedule{};
  s.batch_size = 0;
  EXPECT_VLCE_ERROR(s.validate(), ErrorKind::kConfig);
}

TEST(Generate, TieBreakAndMaxLen) {
  const auto corpus = synthetic::make_corpus(1, 16, 31);
  LstmCaptioner m(small_lstm(), corpus.vocab.index_space(), nullptr, 32);
  zero_all(m.parameters());
  const auto img = random_image(16, 33);
  const auto caption = generate_caption(m, img, corpus.vocab, 3);
  EXPECT_EQ(caption, (std::vector<std::string>(3, corpus.vocab.word(1))));
  EXPECT_EQ(generate_caption(m, img, corpus.vocab, 1).size(), 1u);
}

TEST(Generate, StopsAtEndToken) {
  const auto corpus = synthetic::make_corpus(1, 16, 34);
  LstmCaptioner m(small_lstm(), corpus.vocab.index_space(), nullptr, 35);
  zero_all(m.parameters());
  m.head.bias.mutable_data()[static_cast<std::size_t>(corpus.vocab.end_index())] = 5.0;
  EXPECT_TRUE(generate_caption(m, random_image(16, 36), corpus.vocab, 10).empty());
  m.head.bias.mutable_data()[static_cast<std::size_t>(corpus.vocab.start_index())] = 50.0;
  EXPECT_TRUE(generate_caption(m, random_image(16, 36), corpus.vocab, 10).empty());
}

TEST(Checkpoint, SaveLoadModels) {
  testutil::TempDir tmp;
  const auto corpus = synthetic::make_corpus(2, 16, 37);
  const auto emb = synthetic::make_embedding(corpus.vocab, 24, 38);
  TransformerCaptioner t(small_transformer(), corpus.vocab.index_space(), &emb, 39);
  LstmCaptioner l(small_lstm(), corpus.vocab.index_space(), nullptr, 40);
  const auto img = random_image(16, 41);
  const std::vector<std::int32_t> prefix{corpus.vocab.start_index(), 5};
  for (CaptionModel* m : std::initializer_list<CaptionModel*>{&t, &l}) {
    const auto dir = tmp / m->kind();
    save_model(*m, dir);
    const auto back = load_model(dir);
    EXPECT_EQ(back->kind(), m->kind());
    EXPECT_EQ(back->config_json(), m->config_json());
    const auto a = m->next_token_logits(img, prefix), b = back->next_token_logits(img, prefix);
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-4);
    // saving the reloaded model reproduces the stored bytes
    save_model(*back, tmp / (m->kind() + "2"));
    EXPECT_EQ(io::read_file(dir / "model.vlcf"), io::read_file(tmp / (m->kind() + "2") / "model.vlcf"));
  }
}
