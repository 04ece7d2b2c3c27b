#include "vlce/layers.hpp"

#include <cmath>

#include "vlce/error.hpp"

namespace vlce::nn {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = rng.uniform(-limit, limit);
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

Dense Dense::create(std::size_t in, std::size_t out, Rng& rng) {
  return Dense{glorot(in, out, rng), Tensor::zeros({out}, true)};
}

Tensor Dense::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Dense::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "/weight", weight});
  out.push_back({prefix + "/bias", bias});
}

LayerNorm LayerNorm::create(std::size_t dim) {
  return LayerNorm{Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, x.rank() - 1, eps); }

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "/gamma", gamma});
  out.push_back({prefix + "/beta", beta});
}

AttentionWeights AttentionWeights::create(std::size_t model_dim, Rng& rng) {
  AttentionWeights w;
  w.query = Dense::create(model_dim, model_dim, rng);
  w.key = Dense::create(model_dim, model_dim, rng);
  w.value = Dense::create(model_dim, model_dim, rng);
  w.output = Dense::create(model_dim, model_dim, rng);
  return w;
}

void AttentionWeights::collect(const std::string& prefix, ParameterList& out) const {
  query.collect(prefix + "/query", out);
  key.collect(prefix + "/key", out);
  value.collect(prefix + "/value", out);
  output.collect(prefix + "/output", out);
}

Tensor causal_mask(std::size_t length) {
  std::vector<double> m(length * length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = i + 1; j < length; ++j) m[i * length + j] = -1e9;
  }
  return Tensor::from({length, length}, std::move(m));
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionWeights& w, std::size_t num_heads,
                            const std::optional<Tensor>& mask, std::vector<Tensor>* attention_out) {
  const std::size_t model_dim = w.query.weight.dim(1);
  if (num_heads == 0 || model_dim % num_heads != 0) {
    fail(ErrorKind::kConfig, "model dim " + std::to_string(model_dim) + " is not divisible by " +
                                 std::to_string(num_heads) + " heads");
  }
  const std::size_t head_dim = model_dim / num_heads;
  const std::size_t tq = q_in.dim(0), tk = kv_in.dim(0);
  if (mask && (mask->rank() != 2 || mask->dim(0) != tq || mask->dim(1) != tk)) {
    fail(ErrorKind::kShape, "attention mask " + shape_string(mask->shape()) + " for " + std::to_string(tq) + " queries and " +
                                std::to_string(tk) + " keys");
  }
  const Tensor q = w.query(q_in);
  const Tensor k = w.key(kv_in);
  const Tensor v = w.value(kv_in);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t b = h * head_dim, e = b + head_dim;
    const Tensor qh = num_heads == 1 ? q : slice(q, 1, b, e);
    const Tensor kh = num_heads == 1 ? k : slice(k, 1, b, e);
    const Tensor vh = num_heads == 1 ? v : slice(v, 1, b, e);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask) scores = add(scores, *mask);
    const Tensor weights = softmax(scores, 1);
    if (attention_out) attention_out->push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  const Tensor merged = num_heads == 1 ? heads.front() : concat(heads, 1);
  return w.output(merged);
}

LstmWeights LstmWeights::create(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  LstmWeights w;
  w.input_kernel = glorot(input_dim, 4 * hidden, rng);
  w.recurrent_kernel = glorot(hidden, 4 * hidden, rng);
  std::vector<double> b(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
  w.bias = Tensor::from({4 * hidden}, std::move(b), true);
  return w;
}

void LstmWeights::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "/input_kernel", input_kernel});
  out.push_back({prefix + "/recurrent_kernel", recurrent_kernel});
  out.push_back({prefix + "/bias", bias});
}

LstmResult lstm_forward(const Tensor& inputs, const LstmWeights& w) {
  const std::size_t steps = inputs.dim(0);
  const std::size_t hidden = w.hidden();
  if (inputs.rank() != 2 || inputs.dim(1) != w.input_kernel.dim(0)) {
    fail(ErrorKind::kShape, "lstm inputs " + shape_string(inputs.shape()) + " for kernel " +
                                shape_string(w.input_kernel.shape()));
  }
  const Tensor projected = add(matmul(inputs, w.input_kernel), w.bias);
  Tensor h, c;
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor z = slice(projected, 0, t, t + 1);
    if (t > 0) z = add(z, matmul(h, w.recurrent_kernel));
    const Tensor in_gate = sigmoid(slice(z, 1, 0, hidden));
    const Tensor forget_gate = sigmoid(slice(z, 1, hidden, 2 * hidden));
    const Tensor candidate = tanh(slice(z, 1, 2 * hidden, 3 * hidden));
    const Tensor out_gate = sigmoid(slice(z, 1, 3 * hidden, 4 * hidden));
    c = t > 0 ? add(mul(forget_gate, c), mul(in_gate, candidate)) : mul(in_gate, candidate);
    h = mul(out_gate, tanh(c));
    outputs.push_back(h);
  }
  if (steps == 0) {
    auto zero = Tensor::zeros({1, hidden});
    return {Tensor::zeros({0, hidden}), zero, zero};
  }
  return {steps == 1 ? outputs.front() : concat(outputs, 0), h, c};
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  std::vector<double> pe(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({length, dim}, std::move(pe));
}

}  // namespace vlce::nn
