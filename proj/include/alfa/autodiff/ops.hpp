#pragma once

// Differentiable tensor operations. Each op computes its value eagerly and,
// when any input is attached to a graph, records a node so `grad` can replay
// it backwards. Broadcasting is never implicit: elementwise ops require equal
// shapes and callers expand explicitly with `broadcast_repeat`.

#include <cmath>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "alfa/autodiff/tensor.hpp"

namespace alfa {

/// Slope of the negative half of leaky_relu.
inline constexpr double kLeakySlope = 0.01;

namespace detail {

template <std::floating_point T>
Graph<T>* common_graph(Op op, std::span<const Tensor<T>* const> inputs) {
  Graph<T>* graph = nullptr;
  for (const auto* t : inputs) {
    if (t->empty()) {
      throw ShapeError(std::string(op_name(op)) + ": empty operand");
    }
    if (!t->attached()) continue;
    if (graph && graph != t->graph()) {
      throw GraphError(std::string(op_name(op)) + ": operands belong to different graphs");
    }
    graph = t->graph();
  }
  if (graph && graph->strict()) {
    for (const auto* t : inputs) {
      if (!t->all_finite()) {
        throw NonFiniteError(std::string(op_name(op)) + ": non-finite input");
      }
    }
  }
  return graph;
}

struct OpArgs {
  double factor = 0;
  std::size_t offset = 0;
};

template <std::floating_point T>
Tensor<T> finish(Op op, std::initializer_list<const Tensor<T>*> inputs, Shape shape,
                 std::vector<T> values, std::shared_ptr<const std::vector<T>> aux = {},
                 OpArgs args = {}) {
  std::vector<const Tensor<T>*> ptrs(inputs);
  Graph<T>* graph = common_graph<T>(op, ptrs);
  if (!graph) return Tensor<T>(std::move(shape), std::move(values));
  Node<T> node;
  node.op = op;
  node.inputs.reserve(ptrs.size());
  for (const auto* t : ptrs) node.inputs.push_back(*t);
  node.shape = std::move(shape);
  node.value = std::make_shared<const std::vector<T>>(std::move(values));
  node.aux = std::move(aux);
  node.factor = static_cast<T>(args.factor);
  node.offset = args.offset;
  return graph->record(std::move(node));
}

template <std::floating_point T>
void require_same_shape(Op op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

template <std::floating_point T, class F>
Tensor<T> binary(Op op, const Tensor<T>& a, const Tensor<T>& b, F f) {
  require_same_shape(op, a, b);
  auto x = a.values();
  auto y = b.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return finish<T>(op, {&a, &b}, a.shape(), std::move(out));
}

template <std::floating_point T>
void require_matrix(Op op, const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op_name(op)) + ": expected a matrix, got " +
                     shape_string(a.shape()));
  }
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(Op::add, a, b, [](T x, T y) { return x + y; });
}

template <std::floating_point T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(Op::sub, a, b, [](T x, T y) { return x - y; });
}

template <std::floating_point T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(Op::hadamard, a, b, [](T x, T y) { return x * y; });
}

/// Multiplies every element by a constant.
template <std::floating_point T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto x = a.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return detail::finish<T>(Op::scale, {&a}, a.shape(), std::move(out), {},
                           {static_cast<double>(factor), 0});
}

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(Op::matmul, a);
  detail::require_matrix(Op::matmul, b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  auto x = a.values();
  auto y = b.values();
  std::vector<T> out(m * n, T{0});
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = x[i * k + p];
      const T* brow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return detail::finish<T>(Op::matmul, {&a, &b}, Shape{m, n}, std::move(out));
}

template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(Op::transpose, a);
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  auto x = a.values();
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return detail::finish<T>(Op::transpose, {&a}, Shape{n, m}, std::move(out));
}

template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& a) {
  auto x = a.values();
  std::vector<T> out(x.size());
  auto mask = std::make_shared<std::vector<T>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool on = x[i] > T{0};
    out[i] = on ? x[i] : T{0};
    (*mask)[i] = on ? T{1} : T{0};
  }
  return detail::finish<T>(Op::relu, {&a}, a.shape(), std::move(out), std::move(mask));
}

template <std::floating_point T>
Tensor<T> leaky_relu(const Tensor<T>& a) {
  const T slope = static_cast<T>(kLeakySlope);
  auto x = a.values();
  std::vector<T> out(x.size());
  auto slopes = std::make_shared<std::vector<T>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = x[i] > T{0} ? T{1} : slope;
    out[i] = x[i] * s;
    (*slopes)[i] = s;
  }
  return detail::finish<T>(Op::leaky_relu, {&a}, a.shape(), std::move(out),
                           std::move(slopes));
}

/// Limits every element to [-bound, bound]. Clamped entries pass no gradient.
template <std::floating_point T>
Tensor<T> clamp(const Tensor<T>& a, T bound) {
  if (!(bound > T{0})) throw ShapeError("clamp: bound must be positive");
  auto x = a.values();
  std::vector<T> out(x.size());
  auto mask = std::make_shared<std::vector<T>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool inside = x[i] >= -bound && x[i] <= bound;
    out[i] = inside ? x[i] : (x[i] > T{0} ? bound : -bound);
    (*mask)[i] = inside ? T{1} : T{0};
  }
  return detail::finish<T>(Op::clamp, {&a}, a.shape(), std::move(out), std::move(mask),
                           {static_cast<double>(bound), 0});
}

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc{0};
  for (T v : a.values()) acc += v;
  return detail::finish<T>(Op::sum, {&a}, Shape{}, std::vector<T>{acc});
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& a) {
  T acc{0};
  for (T v : a.values()) acc += v;
  return detail::finish<T>(Op::mean, {&a}, Shape{},
                           std::vector<T>{acc / static_cast<T>(a.size())});
}

template <std::floating_point T>
Tensor<T> square(const Tensor<T>& a) {
  auto x = a.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * x[i];
  return detail::finish<T>(Op::square, {&a}, a.shape(), std::move(out));
}

/// Mean of squared differences over all elements.
template <std::floating_point T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(Op::mse_loss, pred, target);
  auto p = pred.values();
  auto t = target.values();
  T acc{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T d = p[i] - t[i];
    acc += d * d;
  }
  return detail::finish<T>(Op::mse_loss, {&pred, &target}, Shape{},
                           std::vector<T>{acc / static_cast<T>(p.size())});
}

/// Row-wise softmax of a (batch, classes) matrix.
template <std::floating_point T>
Tensor<T> softmax(const Tensor<T>& logits) {
  detail::require_matrix(Op::softmax, logits);
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  auto x = logits.values();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * cols;
    T* o = out.data() + r * cols;
    const T peak = *std::max_element(in, in + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return detail::finish<T>(Op::softmax, {&logits}, logits.shape(), std::move(out));
}

/// Mean negative log-likelihood of integer class labels under row-wise
/// softmax. `labels` holds one class index per row; it is never
/// differentiated.
template <std::floating_point T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels) {
  detail::require_matrix(Op::softmax_cross_entropy, logits);
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (labels.size() != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(logits.shape()));
  }
  auto x = logits.values();
  auto onehot = std::make_shared<std::vector<T>>(x.size(), T{0});
  T acc{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const T raw = labels[r];
    if (!(raw >= T{0}) || raw >= static_cast<T>(cols) || raw != std::floor(raw)) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(raw) +
                       " outside [0, " + std::to_string(cols) + ")");
    }
    const auto label = static_cast<std::size_t>(raw);
    const T* in = x.data() + r * cols;
    const T peak = *std::max_element(in, in + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - peak);
    acc += std::log(total) + peak - in[label];
    (*onehot)[r * cols + label] = T{1};
  }
  return detail::finish<T>(Op::softmax_cross_entropy, {&logits, &labels}, Shape{},
                           std::vector<T>{acc / static_cast<T>(rows)}, std::move(onehot));
}

/// Tiles `a` cyclically to fill `shape`: out[i] = a[i mod a.size()].
/// Covers scalar-to-tensor expansion and row-vector-to-matrix broadcast.
template <std::floating_point T>
Tensor<T> broadcast_repeat(const Tensor<T>& a, const Shape& shape) {
  const std::size_t n = a.size(), total = shape_size(shape);
  if (n == 0 || total % n != 0) {
    throw ShapeError("broadcast_repeat: cannot tile " + shape_string(a.shape()) +
                     " into " + shape_string(shape));
  }
  auto x = a.values();
  std::vector<T> out(total);
  for (std::size_t i = 0; i < total; i += n) std::copy(x.begin(), x.end(), out.begin() + i);
  return detail::finish<T>(Op::broadcast_repeat, {&a}, shape, std::move(out));
}

/// Adjoint of broadcast_repeat: sums the tiles of `a` into `shape`.
template <std::floating_point T>
Tensor<T> tile_sum(const Tensor<T>& a, const Shape& shape) {
  const std::size_t n = shape_size(shape), total = a.size();
  if (total % n != 0) {
    throw ShapeError("tile_sum: cannot fold " + shape_string(a.shape()) + " into " +
                     shape_string(shape));
  }
  auto x = a.values();
  std::vector<T> out(n, T{0});
  for (std::size_t i = 0; i < total; i += n)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i + j];
  return detail::finish<T>(Op::tile_sum, {&a}, shape, std::move(out));
}

/// Contiguous run of `length` elements starting at flat `offset`, as a vector.
template <std::floating_point T>
Tensor<T> slice(const Tensor<T>& a, std::size_t offset, std::size_t length) {
  if (length == 0 || offset + length > a.size()) {
    throw ShapeError("slice: [" + std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") out of range for " +
                     shape_string(a.shape()));
  }
  auto x = a.values();
  std::vector<T> out(x.begin() + static_cast<std::ptrdiff_t>(offset),
                     x.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return detail::finish<T>(Op::slice, {&a}, Shape{length}, std::move(out), {},
                           {0, offset});
}

/// Flattens and joins tensors into one vector.
template <std::floating_point T>
Tensor<T> concat(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  std::vector<const Tensor<T>*> ptrs;
  std::vector<T> out;
  for (const auto& p : parts) {
    ptrs.push_back(&p);
    if (p.empty()) throw ShapeError("concat: empty operand");
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Graph<T>* graph = detail::common_graph<T>(Op::concat, ptrs);
  const Shape shape{out.size()};
  if (!graph) return Tensor<T>(shape, std::move(out));
  Node<T> node;
  node.op = Op::concat;
  node.inputs.assign(parts.begin(), parts.end());
  node.shape = shape;
  node.value = std::make_shared<const std::vector<T>>(std::move(out));
  return graph->record(std::move(node));
}

template <std::floating_point T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat(std::span<const Tensor<T>>(v));
}

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  return detail::finish<T>(Op::reshape, {&a}, shape, a.to_vector());
}

}  // namespace alfa
