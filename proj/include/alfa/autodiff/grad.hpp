#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alfa/autodiff/ops.hpp"

namespace alfa {

struct GradOptions {
  /// Express the backward pass with recorded ops so the returned gradients
  /// stay attached and can themselves be differentiated.
  bool retain_graph = false;
  /// Return zeros for `wrt` tensors with no path from the output instead of
  /// failing.
  bool allow_unused = false;
};

namespace detail {

/// Negative-control hook for gradient checking: when set, every backward
/// rule of this op kind returns a gradient scaled by 1.5. Process-wide and
/// not synchronized; only set it while no other thread differentiates.
inline std::optional<Op>& injected_fault() {
  static std::optional<Op> op;
  return op;
}

template <std::floating_point T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>::zeros(t.shape());
}

/// Vector-Jacobian product of one node. Returns one entry per input; entries
/// for inputs that need no gradient may be empty.
template <std::floating_point T>
std::vector<Tensor<T>> vjp(const Node<T>& node, const Tensor<T>& out, const Tensor<T>& g,
                           bool retain) {
  auto in = [&](std::size_t i) {
    return retain ? node.inputs[i] : node.inputs[i].detach();
  };
  auto aux = [&]() { return Tensor<T>(node.shape, *node.aux); };

  switch (node.op) {
    case Op::leaf:
      return {};
    case Op::add:
      return {g, g};
    case Op::sub:
      return {g, scale(g, T{-1})};
    case Op::hadamard:
      return {hadamard(g, in(1)), hadamard(g, in(0))};
    case Op::scale:
      return {scale(g, node.factor)};
    case Op::matmul:
      return {matmul(g, transpose(in(1))), matmul(transpose(in(0)), g)};
    case Op::transpose:
      return {transpose(g)};
    case Op::relu:
    case Op::leaky_relu:
    case Op::clamp:
      return {hadamard(g, aux())};
    case Op::sum:
      return {broadcast_repeat(g, node.inputs[0].shape())};
    case Op::mean: {
      const auto n = static_cast<T>(node.inputs[0].size());
      return {broadcast_repeat(scale(g, T{1} / n), node.inputs[0].shape())};
    }
    case Op::square:
      return {scale(hadamard(g, in(0)), T{2})};
    case Op::mse_loss: {
      const auto& shape = node.inputs[0].shape();
      const auto n = static_cast<T>(node.inputs[0].size());
      auto diff = sub(in(0), in(1));
      auto gp = scale(hadamard(broadcast_repeat(g, shape), diff), T{2} / n);
      return {gp, scale(gp, T{-1})};
    }
    case Op::softmax: {
      // d/dx: s * (g - rowsum(g * s)); rowsum-and-spread is a product with
      // an all-ones (classes x classes) matrix.
      const std::size_t cols = node.shape[1];
      auto gs = hadamard(g, out);
      auto spread = matmul(gs, Tensor<T>::ones(Shape{cols, cols}));
      return {hadamard(out, sub(g, spread))};
    }
    case Op::softmax_cross_entropy: {
      const auto& shape = node.inputs[0].shape();
      const auto rows = static_cast<T>(shape[0]);
      auto probs = softmax(in(0));
      auto onehot = Tensor<T>(shape, *node.aux);
      auto gl = scale(hadamard(broadcast_repeat(g, shape), sub(probs, onehot)), T{1} / rows);
      return {gl, Tensor<T>{}};
    }
    case Op::broadcast_repeat:
      return {tile_sum(g, node.inputs[0].shape())};
    case Op::tile_sum:
      return {broadcast_repeat(g, node.inputs[0].shape())};
    case Op::slice: {
      const auto& src = node.inputs[0];
      const std::size_t before = node.offset;
      const std::size_t after = src.size() - node.offset - node.shape[0];
      std::vector<Tensor<T>> parts;
      if (before) parts.push_back(Tensor<T>::zeros(Shape{before}));
      parts.push_back(g);
      if (after) parts.push_back(Tensor<T>::zeros(Shape{after}));
      auto flat = parts.size() == 1 ? g : concat(std::span<const Tensor<T>>(parts));
      return {reshape(flat, src.shape())};
    }
    case Op::concat: {
      std::vector<Tensor<T>> grads;
      std::size_t offset = 0;
      for (const auto& part : node.inputs) {
        grads.push_back(reshape(slice(g, offset, part.size()), part.shape()));
        offset += part.size();
      }
      return grads;
    }
    case Op::reshape:
      return {reshape(g, node.inputs[0].shape())};
  }
  throw GraphError("grad: no backward rule for op");
}

}  // namespace detail

/// Reverse-mode gradient of a scalar `output` with respect to each tensor in
/// `wrt`. Tensors in `wrt` may be leaves or intermediate results of the same
/// graph. With `retain_graph` the backward pass is itself recorded, which is
/// how gradients of gradients are taken.
template <std::floating_point T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, std::span<const Tensor<T>> wrt,
                            GradOptions options = {}) {
  if (output.size() != 1) {
    throw GraphError("grad: output must be scalar, got shape " + shape_string(output.shape()));
  }
  if (!output.attached()) throw GraphError("grad: output is not attached to a graph");
  Graph<T>& graph = *output.graph();
  if (wrt.empty()) return {};

  std::size_t lo = output.node();
  for (const auto& w : wrt) {
    if (!w.attached() || w.graph() != &graph) {
      throw GraphError("grad: every wrt tensor must be attached to the output's graph");
    }
    lo = std::min(lo, w.node());
  }
  const std::size_t hi = output.node();
  const std::size_t span_len = hi - lo + 1;

  // A node matters only if some wrt tensor feeds it; parents always precede
  // children, so one forward sweep over [lo, hi] suffices.
  std::vector<char> depends(span_len, 0);
  for (const auto& w : wrt) {
    if (w.node() <= hi) depends[w.node() - lo] = 1;
  }
  for (std::size_t id = lo; id <= hi; ++id) {
    if (depends[id - lo]) continue;
    for (const auto& in : graph.node(id).inputs) {
      if (in.attached() && in.node() >= lo && depends[in.node() - lo]) {
        depends[id - lo] = 1;
        break;
      }
    }
  }

  std::vector<std::optional<Tensor<T>>> cot(span_len);
  cot[hi - lo] = Tensor<T>::ones(output.shape());
  for (std::size_t id = hi + 1; id-- > lo;) {
    auto& slot = cot[id - lo];
    if (!slot || !depends[id - lo]) continue;
    const Node<T>& node = graph.node(id);
    if (node.op == Op::leaf) continue;
    const bool any_input = std::any_of(node.inputs.begin(), node.inputs.end(), [&](const auto& in) {
      return in.attached() && in.node() >= lo && depends[in.node() - lo];
    });
    if (!any_input) continue;
    Tensor<T> out = options.retain_graph ? graph.tensor(id) : graph.tensor(id).detach();
    auto grads = detail::vjp(node, out, *slot, options.retain_graph);
    if (detail::injected_fault() == node.op) {
      for (auto& g : grads)
        if (!g.empty()) g = scale(g, T{1.5});
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const auto& in = node.inputs[i];
      if (grads[i].empty() || !in.attached() || in.node() < lo || !depends[in.node() - lo]) {
        continue;
      }
      auto& target = cot[in.node() - lo];
      target = target ? add(*target, grads[i]) : grads[i];
    }
  }

  std::vector<Tensor<T>> result;
  result.reserve(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const auto& w = wrt[i];
    if (w.node() <= hi && cot[w.node() - lo]) {
      const auto& g = *cot[w.node() - lo];
      result.push_back(options.retain_graph ? g : g.detach());
    } else if (options.allow_unused) {
      result.push_back(detail::zeros_like(w));
    } else {
      throw GraphError("grad: wrt[" + std::to_string(i) + "] (node " +
                       std::to_string(w.node()) + ") is unreachable from the output");
    }
  }
  return result;
}

template <std::floating_point T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, std::initializer_list<Tensor<T>> wrt,
                            GradOptions options = {}) {
  std::vector<Tensor<T>> v(wrt);
  return grad(output, std::span<const Tensor<T>>(v), options);
}

}  // namespace alfa
