#pragma once

// Dense tensors and the append-only computation graph they may be attached to.
//
// A Tensor is a cheap handle: shape, shared immutable storage and, when it
// takes part in a differentiable computation, a (graph, node) pair. Detached
// tensors are plain constants and can be shared freely across threads. A
// Graph is owned by one thread at a time and must outlive every tensor that
// refers to it.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstring>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "alfa/error.hpp"

namespace alfa {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <std::floating_point T>
class Graph;

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;
  using Storage = std::vector<T>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<const Storage>(std::move(values))) {
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("tensor: zero extent in shape " + shape_string(shape_));
    }
    if (shape_size(shape_) != data_->size()) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " holds " +
                       std::to_string(shape_size(shape_)) + " values, got " +
                       std::to_string(data_->size()));
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor full(Shape shape, T value) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return full(std::move(shape), T{1}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }
  bool empty() const noexcept { return !data_; }

  std::span<const T> values() const noexcept {
    return data_ ? std::span<const T>(*data_) : std::span<const T>{};
  }
  T operator[](std::size_t i) const { return (*data_)[i]; }
  T item() const {
    if (size() != 1) {
      throw ShapeError("tensor: item() on shape " + shape_string(shape_));
    }
    return (*data_)[0];
  }
  std::vector<T> to_vector() const { return data_ ? *data_ : std::vector<T>{}; }

  bool attached() const noexcept { return graph_ != nullptr; }
  Graph<T>* graph() const noexcept { return graph_; }
  std::size_t node() const noexcept { return node_; }

  Tensor detach() const {
    Tensor out = *this;
    out.graph_ = nullptr;
    out.node_ = 0;
    return out;
  }

  bool all_finite() const {
    return std::all_of(values().begin(), values().end(),
                       [](T v) { return std::isfinite(v); });
  }

  const std::shared_ptr<const Storage>& storage() const noexcept { return data_; }

 private:
  friend class Graph<T>;

  Tensor(Shape shape, std::shared_ptr<const Storage> data, Graph<T>* graph,
         std::size_t node)
      : shape_(std::move(shape)), data_(std::move(data)), graph_(graph), node_(node) {}

  Shape shape_;
  std::shared_ptr<const Storage> data_;
  Graph<T>* graph_ = nullptr;
  std::size_t node_ = 0;
};

/// Same shape and the same bytes.
template <std::floating_point T>
bool identical(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(T)) == 0;
}

enum class Op : unsigned char {
  leaf,
  add,
  sub,
  hadamard,
  scale,
  matmul,
  transpose,
  relu,
  leaky_relu,
  clamp,
  mean,
  sum,
  square,
  mse_loss,
  softmax,
  softmax_cross_entropy,
  broadcast_repeat,
  tile_sum,
  slice,
  concat,
  reshape,
};

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::hadamard: return "hadamard";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::relu: return "relu";
    case Op::leaky_relu: return "leaky_relu";
    case Op::clamp: return "clamp";
    case Op::mean: return "mean";
    case Op::sum: return "sum";
    case Op::square: return "square";
    case Op::mse_loss: return "mse_loss";
    case Op::softmax: return "softmax";
    case Op::softmax_cross_entropy: return "softmax_cross_entropy";
    case Op::broadcast_repeat: return "broadcast_repeat";
    case Op::tile_sum: return "tile_sum";
    case Op::slice: return "slice";
    case Op::concat: return "concat";
    case Op::reshape: return "reshape";
  }
  return "unknown";
}

/// One operation record. `aux` holds constant side data the backward rule
/// needs (activation masks, one-hot targets); `factor` and `offset` carry
/// scalar op arguments.
template <std::floating_point T>
struct Node {
  Op op = Op::leaf;
  std::vector<Tensor<T>> inputs;
  Shape shape;
  std::shared_ptr<const std::vector<T>> value;
  std::shared_ptr<const std::vector<T>> aux;
  T factor{};
  std::size_t offset = 0;
};

template <std::floating_point T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Registers `value` as a differentiable leaf.
  Tensor<T> variable(const Tensor<T>& value) {
    if (value.empty()) throw GraphError("graph: cannot register an empty tensor");
    Node<T> node;
    node.op = Op::leaf;
    node.shape = value.shape();
    node.value = value.storage();
    return record(std::move(node));
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node<T>& node(std::size_t id) const { return nodes_.at(id); }

  /// Tensor handle for an existing node.
  Tensor<T> tensor(std::size_t id) {
    const auto& n = nodes_.at(id);
    return Tensor<T>(n.shape, n.value, this, id);
  }

  /// When on, every op attached to this graph rejects non-finite inputs.
  bool strict() const noexcept { return strict_; }
  void set_strict(bool on) noexcept { strict_ = on; }

  Tensor<T> record(Node<T> node) {
    nodes_.push_back(std::move(node));
    return tensor(nodes_.size() - 1);
  }

 private:
  // deque: backward appends while holding references to earlier nodes.
  std::deque<Node<T>> nodes_;
  bool strict_ = false;
};

}  // namespace alfa
