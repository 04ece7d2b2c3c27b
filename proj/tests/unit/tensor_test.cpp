#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vlce/tensor.hpp"

using namespace vlce;
using namespace vlce::nn;

namespace {

Tensor random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Full central-difference check of every entry of every input.
void expect_gradients(const std::vector<Tensor>& inputs, const std::function<Tensor()>& f, double tol = 1e-6) {
  ParameterList ps;
  for (std::size_t i = 0; i < inputs.size(); ++i) ps.push_back({"in" + std::to_string(i), inputs[i]});
  std::size_t total = 0;
  for (const auto& t : inputs) total += t.numel();
  const auto r = oracle::check_gradients(ps, f, 1000, total, 1);
  EXPECT_LT(r.max_rel_error, tol) << r.worst;
}

}  // namespace

TEST(Tensor, Examples) {
  auto r = relu(Tensor::from({2}, {-1, 2}));
  EXPECT_EQ(r.data()[0], 0.0);
  EXPECT_EQ(r.data()[1], 2.0);
  auto s = softmax(Tensor::from({2}, {0, 0}), 0);
  EXPECT_DOUBLE_EQ(s.data()[0], 0.5);
  auto ln = layer_norm(Tensor::from({1, 2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1);
  EXPECT_NEAR(ln.data()[0], -1.0, 1e-5);
  EXPECT_NEAR(ln.data()[1], 1.0, 1e-5);
}

TEST(Tensor, ShapeErrors) {
  EXPECT_VLCE_ERROR(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ErrorKind::kShape);
  EXPECT_VLCE_ERROR(add(Tensor::zeros({2, 3}), Tensor::zeros({4})), ErrorKind::kShape);
  EXPECT_VLCE_ERROR(Tensor::from({2}, {1, 2, 3}), ErrorKind::kShape);
  try {
    mul(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(3, 2)"), std::string::npos) << msg;
  }
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  Rng rng(3);
  auto x = random_leaf({5, 9}, rng, -20, 20);
  auto s = softmax(x, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 9; ++j) sum += s.data()[i * 9 + j];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Tensor, LayerNormMatchesOracle) {
  Rng rng(4);
  auto x = random_leaf({3, 6}, rng);
  auto g = random_leaf({6}, rng);
  auto b = random_leaf({6}, rng);
  const auto y = oracle::to_mat(layer_norm(x, g, b, 1));
  const auto expected = oracle::layer_norm(oracle::to_mat(x), std::vector<double>(g.data().begin(), g.data().end()),
                                           std::vector<double>(b.data().begin(), b.data().end()));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(y[i][j], expected[i][j], 1e-12);
  }
}

TEST(Tensor, CrossEntropyExamples) {
  const std::vector<std::int32_t> targets{2, 0};
  const std::vector<double> ones{1, 1};
  EXPECT_NEAR(masked_cross_entropy(Tensor::zeros({2, 4}), targets, ones).item(), std::log(4.0), 1e-12);
  auto big = Tensor::zeros({1, 3});
  big.mutable_data()[1] = 200;
  EXPECT_LT(masked_cross_entropy(big, std::vector<std::int32_t>{1}, std::vector<double>{1}).item(), 1e-12);
  EXPECT_VLCE_ERROR(masked_cross_entropy(Tensor::zeros({2, 4}), targets, std::vector<double>{0, 0}), ErrorKind::kData);
  EXPECT_VLCE_ERROR(masked_cross_entropy(Tensor::zeros({2, 4}), std::vector<std::int32_t>{4, 0}, ones), ErrorKind::kVocab);
}

TEST(Tensor, MaskedPositionContributesNothing) {
  Rng rng(8);
  auto logits = random_leaf({3, 5}, rng);
  const std::vector<std::int32_t> targets{1, 2, 3};
  const std::vector<double> mask{1, 0, 1};
  const double before = masked_cross_entropy(logits, targets, mask).item();
  for (std::size_t j = 5; j < 10; ++j) logits.mutable_data()[j] += 7.0;
  EXPECT_EQ(masked_cross_entropy(logits, targets, mask).item(), before);
}

TEST(Tensor, DropoutSemantics) {
  auto x = Tensor::full({100, 10}, 1.0);
  EXPECT_EQ(dropout(x, 0.5, 1, false).data()[0], 1.0);
  auto d = dropout(x, 0.5, 1, true);
  for (double v : d.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
  EXPECT_VLCE_ERROR(dropout(x, 1.0, 1, true), ErrorKind::kConfig);
}

TEST(Tensor, EmbeddingPadGetsNoGradient) {
  auto m = Tensor::full({4, 3}, 0.5, true);
  const std::vector<std::int32_t> idx{0, 2, 2};
  sum(embedding_lookup(m, idx)).backward();
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(m.grad()[j], 0.0);
    EXPECT_EQ(m.grad()[2 * 3 + j], 2.0);
  }
  EXPECT_VLCE_ERROR(embedding_lookup(m, std::vector<std::int32_t>{4}), ErrorKind::kVocab);
}

TEST(Tensor, NonFiniteChecks) {
  set_finite_checks(true);
  EXPECT_VLCE_ERROR(scale(Tensor::from({1}, {1e308}), 1e308), ErrorKind::kNumeric);
}

TEST(Gradients, Elementwise) {
  Rng rng(11);
  auto a = random_leaf({3, 4}, rng), b = random_leaf({3, 4}, rng), v = random_leaf({4}, rng);
  expect_gradients({a, b, v}, [&] { return sum(mul(tanh(add(a, v)), sigmoid(sub(b, a)))); });
  expect_gradients({a}, [&] { return sum(scale(relu(a), 3.0)); });
}

TEST(Gradients, MatmulSoftmaxLayerNorm) {
  Rng rng(12);
  auto a = random_leaf({3, 4}, rng), w = random_leaf({4, 5}, rng), g = random_leaf({5}, rng), b = random_leaf({5}, rng);
  auto t = Tensor::from({3, 5}, std::vector<double>(15, 0.0));
  for (std::size_t i = 0; i < 15; ++i) t.mutable_data()[i] = std::sin(static_cast<double>(i));
  expect_gradients({a, w, g, b}, [&] { return sum(mul(softmax(layer_norm(matmul(a, w), g, b, 1), 1), t)); });
}

TEST(Gradients, StructuralOps) {
  Rng rng(13);
  auto a = random_leaf({4, 6}, rng), c = random_leaf({2, 6}, rng), r = random_leaf({6}, rng);
  auto weights = Tensor::from({6, 6}, std::vector<double>(36, 0.0));
  for (std::size_t i = 0; i < 36; ++i) weights.mutable_data()[i] = std::cos(0.3 * static_cast<double>(i));
  expect_gradients({a, c, r}, [&] {
    auto x = concat({a, c, repeat_rows(r, 2)}, 0);             // 8 x 6
    auto y = reshape(slice(x, 0, 1, 7), {12, 3});               // 12 x 3
    auto z = transpose(reshape(y, {6, 6}));                     // 6 x 6
    return sum(mul(mean(reshape(matmul(z, weights), {2, 3, 6}), 1), Tensor::full({2, 6}, 0.7)));
  });
}

TEST(Gradients, CrossEntropyAndEmbedding) {
  Rng rng(14);
  auto m = random_leaf({6, 4}, rng), w = random_leaf({4, 6}, rng);
  const std::vector<std::int32_t> idx{1, 3, 5, 3}, targets{2, 4, 0, 1};
  const std::vector<double> mask{1, 1, 0, 1};
  expect_gradients({m, w}, [&] { return masked_cross_entropy(matmul(embedding_lookup(m, idx), w), targets, mask); });
}
