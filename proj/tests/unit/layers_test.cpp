#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vlce/layers.hpp"
#include "vlce/optim.hpp"

using namespace vlce;
using namespace vlce::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor::from(std::move(shape), std::move(v));
}

void identity_dense(Dense& d, std::size_t n) {
  d.weight = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) d.weight.mutable_data()[i * n + i] = 1.0;
  d.bias = Tensor::zeros({n});
}

}  // namespace

TEST(Attention, SingleHeadIdentityReturnsValue) {
  Rng rng(1);
  auto w = AttentionWeights::create(3, rng);
  identity_dense(w.query, 3);
  identity_dense(w.key, 3);
  identity_dense(w.value, 3);
  identity_dense(w.output, 3);
  const auto x = Tensor::from({1, 3}, {0.2, -0.4, 0.9});
  const auto y = multi_head_attention(x, x, w, 1);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y.data()[j], x.data()[j], 1e-12);
}

TEST(Attention, CausalFirstQueryAttendsOnlyToFirstKey) {
  Rng rng(2);
  auto w = AttentionWeights::create(4, rng);
  const auto x = random_tensor({3, 4}, rng);
  std::vector<Tensor> weights;
  multi_head_attention(x, x, w, 2, causal_mask(3), &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const auto& h : weights) {
    EXPECT_NEAR(h.data()[0], 1.0, 1e-12);
    EXPECT_NEAR(h.data()[1], 0.0, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 3; ++j) s += h.data()[i * 3 + j];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Attention, MatchesNaiveOracle) {
  Rng rng(3);
  auto w = AttentionWeights::create(6, rng);
  const auto q = random_tensor({4, 6}, rng), kv = random_tensor({5, 6}, rng);
  for (bool causal : {false, true}) {
    const auto got = oracle::to_mat(
        causal ? multi_head_attention(q, q, w, 2, causal_mask(4)) : multi_head_attention(q, kv, w, 2));
    const auto expected = oracle::attention(oracle::to_mat(q), oracle::to_mat(causal ? q : kv), w, 2, causal);
    for (std::size_t i = 0; i < got.size(); ++i) {
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(got[i][j], expected[i][j], 1e-9);
    }
  }
  EXPECT_VLCE_ERROR(multi_head_attention(q, q, w, 4), ErrorKind::kConfig);
}

TEST(Lstm, ZeroWeightsGiveZeroStates) {
  LstmWeights w{Tensor::zeros({3, 8}), Tensor::zeros({2, 8}), Tensor::zeros({8})};
  Rng rng(4);
  const auto r = lstm_forward(random_tensor({5, 3}, rng), w);
  for (double v : r.outputs.data()) EXPECT_EQ(v, 0.0);
  for (double v : r.cell.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SingleStepHandComputed) {
  // Scalar cell: x = 1, gate pre-activations i=0.5, f=-1, g=0.3, o=2.
  LstmWeights w{Tensor::from({1, 4}, {0.5, -1.0, 0.3, 2.0}), Tensor::zeros({1, 4}), Tensor::zeros({4})};
  const auto r = lstm_forward(Tensor::from({1, 1}, {1.0}), w);
  const double c = (1.0 / (1.0 + std::exp(-0.5))) * std::tanh(0.3);
  const double h = (1.0 / (1.0 + std::exp(-2.0))) * std::tanh(c);
  EXPECT_NEAR(r.cell.item(), c, 1e-12);
  EXPECT_NEAR(r.hidden.item(), h, 1e-12);
}

TEST(Lstm, MatchesNaiveOracle) {
  Rng rng(5);
  auto w = LstmWeights::create(4, 3, rng);
  const auto x = random_tensor({6, 4}, rng);
  const auto got = oracle::to_mat(lstm_forward(x, w).outputs);
  const auto expected = oracle::lstm(oracle::to_mat(x), w);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got[t][j], expected[t][j], 1e-12);
  }
  // forget-gate bias starts at one
  EXPECT_EQ(w.bias.data()[3], 1.0);
  EXPECT_EQ(w.bias.data()[0], 0.0);
}

TEST(Positions, Sinusoidal) {
  const auto pe = sinusoidal_positions(3, 4);
  EXPECT_DOUBLE_EQ(pe.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(pe.data()[1], 1.0);
  EXPECT_NEAR(pe.data()[4], std::sin(1.0), 1e-12);
  EXPECT_NEAR(pe.data()[4 + 2], std::sin(1.0 / 100.0), 1e-12);
  EXPECT_NEAR(pe.data()[4 + 3], std::cos(1.0 / 100.0), 1e-12);
}

TEST(Adam, SingleStepFromZeroMoments) {
  ParameterList ps{{"p", Tensor::full({1}, 0.5, true)}};
  ps[0].value.mutable_grad()[0] = 1.0;
  Adam adam(AdamConfig{0.001});
  adam.step(ps);
  EXPECT_NEAR(ps[0].value.data()[0], 0.5 - 0.001, 1e-9);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterList ps{{"p", Tensor::full({3}, 0.25, true)}};
  ps[0].value.mutable_grad();
  zero_grads(ps);
  Adam adam;
  for (int i = 0; i < 5; ++i) adam.step(ps);
  for (double v : ps[0].value.data()) EXPECT_EQ(v, 0.25);
}

TEST(Adam, ConstantGradientStepTendsToLr) {
  ParameterList ps{{"p", Tensor::full({1}, 0.0, true)}};
  Adam adam(AdamConfig{0.01});
  double prev = 0.0;
  for (int i = 0; i < 200; ++i) {
    zero_grads(ps);
    ps[0].value.mutable_grad()[0] = -3.0;
    adam.step(ps);
    const double now = ps[0].value.data()[0];
    EXPECT_GT(now, prev);
    if (i > 100) EXPECT_NEAR(now - prev, 0.01, 1e-4);
    prev = now;
  }
}

TEST(Adam, FrozenParametersUntouched) {
  ParameterList ps{{"frozen", Tensor::full({2}, 1.0, false)}};
  Adam adam;
  adam.step(ps);
  EXPECT_EQ(ps[0].value.data()[0], 1.0);
}

TEST(Checkpoint, ParameterRoundTripAcrossChunks) {
  testutil::TempDir tmp;
  Rng rng(6);
  ParameterList ps{{"a", random_tensor({30, 20}, rng)}, {"b/c", random_tensor({7}, rng)}};
  save_parameters(ps, tmp / "m.vlcf", tmp / "m.json", R"({"k": 1})");
  ParameterList back{{"a", Tensor::zeros({30, 20})}, {"b/c", Tensor::zeros({7})}};
  load_parameters(back, tmp / "m.vlcf");
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t i = 0; i < ps[p].value.numel(); ++i) {
      EXPECT_EQ(back[p].value.data()[i], static_cast<double>(static_cast<float>(ps[p].value.data()[i])));
    }
  }
  const auto store = load_feature_store(tmp / "m.vlcf");
  EXPECT_EQ(store.dim(), kCheckpointChunk);
  EXPECT_TRUE(store.contains("a@256"));
  ParameterList wrong{{"a", Tensor::zeros({20, 30})}};
  EXPECT_VLCE_ERROR(load_parameters(wrong, tmp / "m.vlcf"), ErrorKind::kData);
  ParameterList missing{{"zzz", Tensor::zeros({2})}};
  EXPECT_VLCE_ERROR(load_parameters(missing, tmp / "m.vlcf"), ErrorKind::kData);
}

TEST(Checkpoint, OptimizerRoundTrip) {
  testutil::TempDir tmp;
  ParameterList ps{{"p", Tensor::full({300}, 0.5, true)}};
  for (std::size_t i = 0; i < 300; ++i) ps[0].value.mutable_grad()[i] = 0.01 * static_cast<double>(i);
  Adam adam(AdamConfig{0.002});
  adam.step(ps);
  adam.step(ps);
  save_optimizer(adam, tmp / "o.json", tmp / "o.vlcf");
  const auto back = load_optimizer(tmp / "o.json", tmp / "o.vlcf");
  EXPECT_EQ(back.steps(), 2u);
  EXPECT_EQ(back.config().learning_rate, 0.002);
  ASSERT_EQ(back.moments().at("p").first.size(), 300u);
  EXPECT_NEAR(back.moments().at("p").second[299], adam.moments().at("p").second[299], 1e-9);
}
