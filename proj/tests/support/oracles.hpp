#pragma once

// Reference implementations used to check the library: plain loops over
// std::vector, no autodiff, no shared code with core/src.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlce/layers.hpp"
#include "vlce/models.hpp"
#include "vlce/rng.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const vlce::nn::Tensor& t) {
  const std::size_t rows = t.rank() == 1 ? 1 : t.dim(0);
  const std::size_t cols = t.rank() == 1 ? t.dim(0) : t.dim(1);
  Mat m(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m[i][j] = t.data()[i * cols + j];
  }
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      for (std::size_t j = 0; j < b[k].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    }
  }
  return c;
}

inline Mat dense(const Mat& x, const vlce::nn::Dense& d) {
  auto y = matmul(x, to_mat(d.weight));
  const auto b = d.bias.data();
  for (auto& row : y) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
  return y;
}

inline std::vector<double> softmax(std::vector<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (auto& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (auto& x : v) x /= s;
  return v;
}

inline Mat layer_norm(const Mat& x, const std::vector<double>& gamma, const std::vector<double>& beta, double eps = 1e-5) {
  Mat y = x;
  for (auto& row : y) {
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mu) / std::sqrt(var + eps) * gamma[j] + beta[j];
  }
  return y;
}

// Multi-head attention written head by head with explicit loops.
inline Mat attention(const Mat& q_in, const Mat& kv_in, const vlce::nn::AttentionWeights& w, std::size_t heads,
                     bool causal) {
  const Mat q = dense(q_in, w.query), k = dense(kv_in, w.key), v = dense(kv_in, w.value);
  const std::size_t d = q.front().size(), hd = d / heads;
  Mat merged(q.size(), std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> scores(k.size());
      for (std::size_t j = 0; j < k.size(); ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += q[i][h * hd + c] * k[j][h * hd + c];
        s /= std::sqrt(static_cast<double>(hd));
        if (causal && j > i) s += -1e9;
        scores[j] = s;
      }
      const auto p = softmax(scores);
      for (std::size_t j = 0; j < k.size(); ++j) {
        for (std::size_t c = 0; c < hd; ++c) merged[i][h * hd + c] += p[j] * v[j][h * hd + c];
      }
    }
  }
  return dense(merged, w.output);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Keras-style LSTM, gates i, f, g, o, zero initial state.
inline Mat lstm(const Mat& inputs, const vlce::nn::LstmWeights& w) {
  const auto wi = to_mat(w.input_kernel), wr = to_mat(w.recurrent_kernel);
  const auto b = w.bias.data();
  const std::size_t hsz = wr.size();
  std::vector<double> h(hsz, 0.0), c(hsz, 0.0);
  Mat out;
  for (const auto& x : inputs) {
    std::vector<double> z(4 * hsz);
    for (std::size_t j = 0; j < 4 * hsz; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * wi[k][j];
      for (std::size_t k = 0; k < hsz; ++k) s += h[k] * wr[k][j];
      z[j] = s;
    }
    for (std::size_t j = 0; j < hsz; ++j) {
      const double ig = sigmoid(z[j]), fg = sigmoid(z[hsz + j]), g = std::tanh(z[2 * hsz + j]),
                   og = sigmoid(z[3 * hsz + j]);
      c[j] = fg * c[j] + ig * g;
      h[j] = og * std::tanh(c[j]);
    }
    out.push_back(h);
  }
  return out;
}

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---- whole models, inference mode ---------------------------------------------

inline std::vector<double> vec(const vlce::nn::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline Mat relu(Mat m) {
  for (auto& row : m) {
    for (auto& v : row) v = std::max(v, 0.0);
  }
  return m;
}

inline Mat add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  }
  return a;
}

inline Mat ln(const Mat& x, const vlce::nn::LayerNorm& n) { return layer_norm(x, vec(n.gamma), vec(n.beta), n.eps); }

// Row-major regrouping of a 1 x (rows*cols) matrix.
inline Mat regroup(const Mat& m, std::size_t rows) {
  const std::size_t cols = m[0].size() / rows;
  Mat out(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i][j] = m[0][i * cols + j];
  }
  return out;
}

inline Mat visual_memory(const vlce::TransformerCaptioner& m, const std::vector<float>& image) {
  const auto& c = m.config();
  const Mat img{std::vector<double>(image.begin(), image.end())};
  Mat rows = relu(dense(img, m.global_proj));
  for (auto& r : dense(regroup(relu(dense(img, m.regional_proj)), c.regional_patches), m.regional_expand)) rows.push_back(r);
  for (auto& r : dense(regroup(relu(dense(img, m.local_proj)), c.local_patches), m.local_expand)) rows.push_back(r);
  return ln(rows, m.visual_norm);
}

inline Mat transformer_logits(const vlce::TransformerCaptioner& m, const std::vector<float>& image,
                              const std::vector<std::int32_t>& tokens) {
  const auto& c = m.config();
  const Mat mem = visual_memory(m, image);
  const std::size_t d = c.model_dim;
  const auto emb = to_mat(m.embedding);
  Mat x(tokens.size(), std::vector<double>(d));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double angle = static_cast<double>(t) / std::pow(10000.0, static_cast<double>(2 * (j / 2)) / static_cast<double>(d));
      x[t][j] = emb[static_cast<std::size_t>(tokens[t])][j] + (j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  for (const auto& layer : m.layers) {
    x = ln(add(x, attention(x, x, layer.self_attention, c.heads, true)), layer.self_norm);
    x = ln(add(x, attention(x, mem, layer.cross_attention, c.heads, false)), layer.cross_norm);
    x = ln(add(x, dense(relu(dense(x, layer.ffn_in)), layer.ffn_out)), layer.ffn_norm);
  }
  std::vector<double> ctx(d, 0.0);
  for (const auto& r : mem) {
    for (std::size_t j = 0; j < d; ++j) ctx[j] += r[j] / static_cast<double>(mem.size());
  }
  for (auto& r : x) r.insert(r.end(), ctx.begin(), ctx.end());
  return dense(ln(x, m.head_norm), m.head);
}

// Next-token distribution after `prefix`.
inline std::vector<double> lstm_distribution(const vlce::LstmCaptioner& m, const std::vector<float>& image,
                                             const std::vector<std::int32_t>& prefix) {
  const Mat img{std::vector<double>(image.begin(), image.end())};
  const auto f_img = relu(dense(img, m.image_proj))[0];
  const auto emb = to_mat(m.embedding);
  Mat words;
  for (auto t : prefix) words.push_back(emb[static_cast<std::size_t>(t)]);
  auto h = lstm(words, m.lstm).back();
  for (std::size_t j = 0; j < h.size(); ++j) h[j] += f_img[j];
  return softmax(dense(relu(dense(Mat{h}, m.fusion)), m.head)[0]);
}

// ---- finite differences ------------------------------------------------------

struct GradCheck {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t tensors = 0;
};

// Central differences on sampled entries of every trainable tensor
// (`per_tensor` each, more from the largest tensors until `min_total`).
// rel = |a - n| / max(|a| + |n|, floor).
inline GradCheck check_gradients(const vlce::nn::ParameterList& params,
                                 const std::function<vlce::nn::Tensor()>& loss, std::size_t per_tensor,
                                 std::size_t min_total, std::uint64_t seed, double h = 1e-5, double floor = 1e-6) {
  auto ps = params;
  vlce::nn::zero_grads(ps);
  loss().backward();
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  vlce::Rng rng(seed);
  std::vector<std::size_t> trainable;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    if (ps[p].value.requires_grad()) trainable.push_back(p);
  }
  for (auto p : trainable) {
    const auto n = ps[p].value.numel();
    for (std::size_t k = 0; k < std::min(per_tensor, n); ++k) picks.emplace_back(p, rng.below(n));
  }
  while (picks.size() < min_total && !trainable.empty()) {
    const auto p = trainable[rng.below(trainable.size())];
    picks.emplace_back(p, rng.below(ps[p].value.numel()));
  }
  GradCheck out;
  out.tensors = trainable.size();
  for (auto [p, i] : picks) {
    auto& t = ps[p].value;
    const auto g = t.grad();
    const double analytic = g.empty() ? 0.0 : g[i];
    const double orig = t.mutable_data()[i];
    t.mutable_data()[i] = orig + h;
    const double up = loss().item();
    t.mutable_data()[i] = orig - h;
    const double down = loss().item();
    t.mutable_data()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
    ++out.checked;
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst = ps[p].name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) + " numeric " +
                  std::to_string(numeric);
    }
  }
  return out;
}

}  // namespace oracle
