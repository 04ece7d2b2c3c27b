#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vlce/rng.hpp"
#include "vlce/tensor.hpp"

namespace vlce::nn {

// A named trainable tensor. Names are slash-separated paths ("decoder/0/ffn/w1").
struct Parameter {
  std::string name;
  Tensor value;
};

using ParameterList = std::vector<Parameter>;

// Glorot-uniform (fan_in x fan_out) weight, as Keras initializes Dense kernels.
Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Dense {
  Tensor weight;  // (in x out)
  Tensor bias;    // (out)

  static Dense create(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;  // x: (rows x in)
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNorm create(std::size_t dim);
  Tensor operator()(const Tensor& x) const;  // normalizes the last axis
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct AttentionWeights {
  Dense query;
  Dense key;
  Dense value;
  Dense output;

  static AttentionWeights create(std::size_t model_dim, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Additive mask of shape (T_q x T_k): 0 where attention is allowed, -1e9
// where it is not.
Tensor causal_mask(std::size_t length);

// Scaled dot-product attention per head over column slices of the projected
// queries/keys/values; heads are concatenated and passed through the output
// projection. `attention_out`, when given, receives each head's weights.
// kConfig when the model dim is not divisible by num_heads.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionWeights& w, std::size_t num_heads,
                            const std::optional<Tensor>& mask = std::nullopt,
                            std::vector<Tensor>* attention_out = nullptr);

// Gate order along the 4H axis: input, forget, candidate, output.
struct LstmWeights {
  Tensor input_kernel;      // (d_in x 4H)
  Tensor recurrent_kernel;  // (H x 4H)
  Tensor bias;              // (4H), forget slice initialized to 1

  static LstmWeights create(std::size_t input_dim, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return recurrent_kernel.dim(0); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct LstmResult {
  Tensor outputs;  // (T x H)
  Tensor hidden;   // (1 x H) final h
  Tensor cell;     // (1 x H) final c
};

// Zero initial state.
LstmResult lstm_forward(const Tensor& inputs, const LstmWeights& w);

// Standard sinusoidal encoding, (length x dim).
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

}  // namespace vlce::nn
