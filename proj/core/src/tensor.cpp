#include "vlce/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "vlce/error.hpp"
#include "vlce/rng.hpp"

namespace vlce::nn {
namespace {

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

void check_finite(const Node& n, const char* op) {
  if (!g_finite_checks.load(std::memory_order_relaxed)) return;
  for (double v : n.value) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, std::string("non-finite value produced by ") + op);
  }
}

// Wraps a freshly computed value. Records the backward rule only if some
// input needs a gradient.
Tensor finish(const char* op, Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
              std::function<void(Node&)> backward) {
  auto n = make_node(std::move(shape), std::move(value));
  check_finite(*n, op);
  bool needs = false;
  for (const auto* t : inputs) needs = needs || t->requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const auto* t : inputs) n->parents.push_back(t->node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

Tensor finish_many(const char* op, Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward) {
  auto n = make_node(std::move(shape), std::move(value));
  check_finite(*n, op);
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// Gradient buffer of parent i if it wants one, else nullptr.
double* parent_grad(Node& n, std::size_t i) {
  auto& p = *n.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

void require(bool ok, const std::string& message) {
  if (!ok) fail(ErrorKind::kShape, message);
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  require(axis < shape.size(), std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                                   shape_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks() { return g_finite_checks.load(); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  require(shape_numel(shape) == data.size(), "tensor data of length " + std::to_string(data.size()) +
                                                 " does not fit shape " + shape_string(shape));
  auto node = make_node(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape().size(), "axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  require(numel() == 1, "item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() {
  require(numel() == 1, "backward() needs a scalar, got shape " + shape_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.contains(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior nodes start from zero; leaves keep what they have accumulated.
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return finish("matmul", {m, n}, std::move(c), {&a, &b}, [m, k, n](Node& out) {
    const double* G = out.grad.data();
    const double* A = out.parents[0]->value.data();
    const double* B = out.parents[1]->value.data();
    if (double* dA = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (double* dB = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* drow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> c(a.numel());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] + b.data()[i];
    return finish("add", a.shape(), std::move(c), {&a, &b}, [](Node& out) {
      for (std::size_t p = 0; p < 2; ++p) {
        if (double* d = parent_grad(out, p)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i];
        }
      }
    });
  }
  const std::size_t n = a.rank() ? a.shape().back() : 0;
  const bool row_vector = (b.rank() == 1 && b.dim(0) == n) || (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == n);
  require(row_vector && n > 0, "add shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const std::size_t rows = a.numel() / n;
  std::vector<double> c(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) c[r * n + j] = a.data()[r * n + j] + b.data()[j];
  }
  return finish("add", a.shape(), std::move(c), {&a, &b}, [rows, n](Node& out) {
    if (double* da = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) da[i] += out.grad[i];
    }
    if (double* db = parent_grad(out, 1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) db[j] += out.grad[r * n + j];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] - b.data()[i];
  return finish("sub", a.shape(), std::move(c), {&a, &b}, [](Node& out) {
    if (double* da = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) da[i] += out.grad[i];
    }
    if (double* db = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) db[i] -= out.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] * b.data()[i];
  return finish("mul", a.shape(), std::move(c), {&a, &b}, [](Node& out) {
    const auto& av = out.parents[0]->value;
    const auto& bv = out.parents[1]->value;
    if (double* da = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) da[i] += out.grad[i] * bv[i];
    }
    if (double* db = parent_grad(out, 1)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) db[i] += out.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] * factor;
  return finish("scale", a.shape(), std::move(c), {&a}, [factor](Node& out) {
    if (double* d = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i] * factor;
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return finish("relu", a.shape(), std::move(c), {&a}, [](Node& out) {
    const auto& x = out.parents[0]->value;
    if (double* d = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        if (x[i] > 0.0) d[i] += out.grad[i];
      }
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double x = a.data()[i];
    c[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return finish("sigmoid", a.shape(), std::move(c), {&a}, [](Node& out) {
    if (double* d = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        const double s = out.value[i];
        d[i] += out.grad[i] * s * (1.0 - s);
      }
    }
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> c(a.numel());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::tanh(a.data()[i]);
  return finish("tanh", a.shape(), std::move(c), {&a}, [](Node& out) {
    if (double* d = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        const double t = out.value[i];
        d[i] += out.grad[i] * (1.0 - t * t);
      }
    }
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis, "softmax");
  std::vector<double> c(a.numel());
  const double* x = a.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < s.n; ++j) mx = std::max(mx, x[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(x[base + j * s.inner] - mx);
        c[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) c[base + j * s.inner] /= total;
    }
  }
  return finish("softmax", a.shape(), std::move(c), {&a}, [s](Node& out) {
    double* d = parent_grad(out, 0);
    if (!d) return;
    const double* y = out.value.data();
    const double* g = out.grad.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = base + j * s.inner;
          d[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t axis, double eps) {
  const auto s = split_axis(x.shape(), axis, "layer_norm");
  require(gamma.numel() == s.n && beta.numel() == s.n, "layer_norm gamma/beta " + shape_string(gamma.shape()) + "/" +
                                                           shape_string(beta.shape()) + " for axis of length " +
                                                           std::to_string(s.n));
  const std::size_t groups = s.outer * s.inner;
  std::vector<double> y(x.numel());
  // Saved for backward: normalized values and 1/sigma per group.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  const double* xv = x.data().data();
  const double* gv = gamma.data().data();
  const double* bv = beta.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mu = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) mu += xv[base + j * s.inner];
      mu /= static_cast<double>(s.n);
      double var = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double dlt = xv[base + j * s.inner] - mu;
        var += dlt * dlt;
      }
      var /= static_cast<double>(s.n);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[o * s.inner + in] = is;
      for (std::size_t j = 0; j < s.n; ++j) {
        const std::size_t idx = base + j * s.inner;
        const double h = (xv[idx] - mu) * is;
        (*xhat)[idx] = h;
        y[idx] = h * gv[j] + bv[j];
      }
    }
  }
  return finish("layer_norm", x.shape(), std::move(y), {&x, &gamma, &beta}, [s, xhat, inv_std](Node& out) {
    const double* g = out.grad.data();
    const double* gv = out.parents[1]->value.data();
    double* dx = parent_grad(out, 0);
    double* dgamma = parent_grad(out, 1);
    double* dbeta = parent_grad(out, 2);
    const double n = static_cast<double>(s.n);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        double sum_gh = 0.0, sum_ghh = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = base + j * s.inner;
          const double gh = g[idx] * gv[j];
          sum_gh += gh;
          sum_ghh += gh * (*xhat)[idx];
          if (dgamma) dgamma[j] += g[idx] * (*xhat)[idx];
          if (dbeta) dbeta[j] += g[idx];
        }
        if (dx) {
          const double is = (*inv_std)[o * s.inner + in];
          for (std::size_t j = 0; j < s.n; ++j) {
            const std::size_t idx = base + j * s.inner;
            const double gh = g[idx] * gv[j];
            dx[idx] += is / n * (n * gh - sum_gh - (*xhat)[idx] * sum_ghh);
          }
        }
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::kConfig, "dropout rate must lie in [0, 1)");
  if (!train || rate == 0.0) return x;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*mask)[i] = rng.uniform01() >= rate ? keep_scale : 0.0;
    y[i] = x.data()[i] * (*mask)[i];
  }
  return finish("dropout", x.shape(), std::move(y), {&x}, [mask](Node& out) {
    if (double* d = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i] * (*mask)[i];
    }
  });
}

Tensor embedding_lookup(const Tensor& matrix, std::span<const std::int32_t> indices) {
  require(matrix.rank() == 2, "embedding_lookup needs a 2-D matrix, got " + shape_string(matrix.shape()));
  const std::size_t rows = matrix.dim(0), d = matrix.dim(1);
  std::vector<double> y(indices.size() * d);
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const auto idx = indices[t];
    if (idx < 0 || static_cast<std::size_t>(idx) >= rows) {
      fail(ErrorKind::kVocab, "token index " + std::to_string(idx) + " outside embedding rows 0.." + std::to_string(rows - 1));
    }
    std::copy_n(matrix.data().data() + static_cast<std::size_t>(idx) * d, d, y.data() + t * d);
  }
  std::vector<std::int32_t> idx_copy(indices.begin(), indices.end());
  return finish("embedding_lookup", {indices.size(), d}, std::move(y), {&matrix}, [idx_copy, d](Node& out) {
    double* dm = parent_grad(out, 0);
    if (!dm) return;
    for (std::size_t t = 0; t < idx_copy.size(); ++t) {
      if (idx_copy[t] == 0) continue;
      double* row = dm + static_cast<std::size_t>(idx_copy[t]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += out.grad[t * d + j];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat of zero tensors");
  const auto& first = parts.front().shape();
  require(axis < first.size(), "concat axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& sh = p.shape();
    bool ok = sh.size() == first.size();
    for (std::size_t i = 0; ok && i < sh.size(); ++i) ok = i == axis || sh[i] == first[i];
    require(ok, "concat shapes " + shape_string(first) + " and " + shape_string(sh) + " on axis " + std::to_string(axis));
    out_shape[axis] += sh[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_block = out_shape[axis] * inner;
  std::vector<double> y(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t block = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * block, block, y.data() + o * out_block + off);
    }
    off += block;
  }
  return finish_many("concat", out_shape, std::move(y), parts, [outer, out_block, offsets](Node& out) {
    for (std::size_t i = 0; i < out.parents.size(); ++i) {
      double* d = parent_grad(out, i);
      if (!d) continue;
      const std::size_t block = out.parents[i]->value.size() / outer;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* g = out.grad.data() + o * out_block + offsets[i];
        for (std::size_t j = 0; j < block; ++j) d[o * block + j] += g[j];
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), "reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  std::vector<double> y(a.data().begin(), a.data().end());
  return finish("reshape", std::move(shape), std::move(y), {&a}, [](Node& out) {
    if (double* d = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) d[i] += out.grad[i];
    }
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const auto s = split_axis(a.shape(), axis, "mean");
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> y(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      for (std::size_t in = 0; in < s.inner; ++in) y[o * s.inner + in] += a.data()[(o * s.n + j) * s.inner + in];
    }
  }
  for (auto& v : y) v /= static_cast<double>(s.n);
  return finish("mean", out_shape, std::move(y), {&a}, [s](Node& out) {
    double* d = parent_grad(out, 0);
    if (!d) return;
    const double inv = 1.0 / static_cast<double>(s.n);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.n; ++j) {
        for (std::size_t in = 0; in < s.inner; ++in) d[(o * s.n + j) * s.inner + in] += out.grad[o * s.inner + in] * inv;
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose needs a 2-D tensor, got " + shape_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = a.data()[i * c + j];
  }
  return finish("transpose", {c, r}, std::move(y), {&a}, [r, c](Node& out) {
    if (double* d = parent_grad(out, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) d[i * c + j] += out.grad[j * r + i];
      }
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto s = split_axis(a.shape(), axis, "slice");
  require(begin < end && end <= s.n, "slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") of axis " +
                                         std::to_string(axis) + " in " + shape_string(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t len = (end - begin) * s.inner;
  std::vector<double> y(s.outer * len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(a.data().data() + (o * s.n + begin) * s.inner, len, y.data() + o * len);
  }
  return finish("slice", std::move(out_shape), std::move(y), {&a}, [s, begin, len](Node& out) {
    double* d = parent_grad(out, 0);
    if (!d) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = d + (o * s.n + begin) * s.inner;
      const double* g = out.grad.data() + o * len;
      for (std::size_t j = 0; j < len; ++j) dst[j] += g[j];
    }
  });
}

Tensor repeat_rows(const Tensor& v, std::size_t rows) {
  const bool ok = v.rank() == 1 || (v.rank() == 2 && v.dim(0) == 1);
  require(ok, "repeat_rows needs a vector or a single row, got " + shape_string(v.shape()));
  const std::size_t d = v.numel();
  std::vector<double> y(rows * d);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data().data(), d, y.data() + r * d);
  return finish("repeat_rows", {rows, d}, std::move(y), {&v}, [rows, d](Node& out) {
    if (double* g = parent_grad(out, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) g[j] += out.grad[r * d + j];
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return finish("sum", {1}, {total}, {&a}, [](Node& out) {
    if (double* d = parent_grad(out, 0)) {
      const double g = out.grad[0];
      const std::size_t n = out.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) d[i] += g;
    }
  });
}

Tensor masked_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, std::span<const double> mask) {
  require(logits.rank() == 2, "masked_cross_entropy needs (N x V) logits, got " + shape_string(logits.shape()));
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  require(targets.size() == n && mask.size() == n, "masked_cross_entropy: " + std::to_string(n) + " rows but " +
                                                       std::to_string(targets.size()) + " targets and " +
                                                       std::to_string(mask.size()) + " mask entries");
  double mask_total = 0.0;
  for (double m : mask) mask_total += m;
  if (!(mask_total > 0.0)) fail(ErrorKind::kData, "degenerate batch: every position is masked");

  auto probs = std::make_shared<std::vector<double>>(n * v);
  const double* x = logits.data().data();
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (mask[r] == 0.0) continue;
    const auto tgt = targets[r];
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= v) {
      fail(ErrorKind::kVocab, "target index " + std::to_string(tgt) + " outside 0.." + std::to_string(v - 1));
    }
    const double* row = x + r * v;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < v; ++j) total += std::exp(row[j] - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t j = 0; j < v; ++j) (*probs)[r * v + j] = std::exp(row[j] - log_z);
    loss -= mask[r] * (row[static_cast<std::size_t>(tgt)] - log_z);
  }
  loss /= mask_total;
  std::vector<std::int32_t> tgt_copy(targets.begin(), targets.end());
  std::vector<double> mask_copy(mask.begin(), mask.end());
  return finish("masked_cross_entropy", {1}, {loss}, {&logits},
                [probs, tgt_copy, mask_copy, mask_total, n, v](Node& out) {
                  double* d = parent_grad(out, 0);
                  if (!d) return;
                  const double g = out.grad[0] / mask_total;
                  for (std::size_t r = 0; r < n; ++r) {
                    if (mask_copy[r] == 0.0) continue;
                    const double w = g * mask_copy[r];
                    for (std::size_t j = 0; j < v; ++j) d[r * v + j] += w * (*probs)[r * v + j];
                    d[r * v + static_cast<std::size_t>(tgt_copy[r])] -= w;
                  }
                });
}

}  // namespace vlce::nn
