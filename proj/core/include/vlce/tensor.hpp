#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

// Dense row-major tensors with reverse-mode differentiation.
//
// Values are stored and accumulated in double. A Tensor is a cheap handle to a
// graph node; ops on tensors that require gradients record a backward rule and
// keep their inputs alive, so the graph lives exactly as long as its outputs.
namespace vlce::nn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  // kShape if data.size() does not match the shape.
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writes through to every handle. Only valid on leaves (parameters, inputs).
  std::span<double> mutable_data();

  bool requires_grad() const;
  void set_requires_grad(bool value);

  // Empty when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  double item() const;

  // Seeds d(this)/d(this) = 1 and propagates through the recorded graph. Only
  // scalar tensors. Leaf gradients accumulate across calls.
  void backward();

  // Same values, no history.
  Tensor detach() const;

  const detail::Node* node() const noexcept { return node_.get(); }

  // Internal: used by the op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// When enabled, every op checks its output for NaN/Inf and throws kNumeric.
// Defaults to on in builds without NDEBUG.
void set_finite_checks(bool enabled);
bool finite_checks();

// ---- primitives -----------------------------------------------------------

// (m x k) . (k x n)
Tensor matmul(const Tensor& a, const Tensor& b);
// Same shape, or b is a vector (n) / row (1 x n) broadcast over a's last axis.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Elementwise, same shape.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);
// Normalizes over `axis` with population variance; gamma/beta have the
// length of that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t axis, double eps = 1e-5);
// Inverted dropout. Identity when !train or rate == 0. kConfig unless
// 0 <= rate < 1.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed, bool train);
// Rows of a (V x d) matrix. Index 0 (pad) never receives gradient.
// kVocab for indices outside [0, V).
Tensor embedding_lookup(const Tensor& matrix, std::span<const std::int32_t> indices);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
// Removes `axis`.
Tensor mean(const Tensor& a, std::size_t axis);
// 2-D only.
Tensor transpose(const Tensor& a);
// [begin, end) along axis.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
// (d) or (1 x d) -> (rows x d)
Tensor repeat_rows(const Tensor& v, std::size_t rows);
Tensor sum(const Tensor& a);

// -(1 / sum m) * sum_t m_t * log softmax(logits_t)[target_t] over rows of a
// (N x V) logit matrix. kData if every mask entry is 0, kVocab on a bad target.
Tensor masked_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, std::span<const double> mask);

}  // namespace vlce::nn
