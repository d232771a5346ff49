#pragma once

#include <cmath>
#include <vector>

#include "alfa/param_set.hpp"

namespace alfa {

struct OuterOptimizerConfig {
  enum class Kind { adam, sgd };
  Kind kind = Kind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Rescales the summed meta-gradient to this global L2 norm when it is
  /// larger; 0 disables clipping.
  double clip_norm = 0.0;
};

/// Adam or plain SGD over a ParamSet. Moments are kept in ParamSets with the
/// same names so they serialize alongside the parameters.
template <std::floating_point T>
class OuterOptimizer {
 public:
  OuterOptimizer() = default;
  OuterOptimizer(OuterOptimizerConfig config, const ParamSet<T>& like) : config_(config) {
    std::vector<Tensor<T>> zeros;
    for (const auto& e : like.entries()) zeros.push_back(Tensor<T>::zeros(e.tensor.shape()));
    first_ = like.with_tensors(zeros);
    second_ = like.with_tensors(zeros);
  }

  ParamSet<T> step(const ParamSet<T>& params, const std::vector<Tensor<T>>& grads) {
    if (grads.size() != params.size()) throw ShapeError("optimizer: gradient count mismatch");
    ++steps_;
    const std::vector<Tensor<T>> clipped = clip(grads);
    const T lr = static_cast<T>(config_.learning_rate);
    std::vector<Tensor<T>> next, m_next, v_next;
    if (config_.kind == OuterOptimizerConfig::Kind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].values();
        auto g = clipped[i].values();
        std::vector<T> out(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) out[k] = p[k] - lr * g[k];
        next.emplace_back(params[i].shape(), std::move(out));
      }
      return params.with_tensors(std::move(next));
    }
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T eps = static_cast<T>(config_.epsilon);
    const T c1 = T{1} - static_cast<T>(std::pow(config_.beta1, static_cast<double>(steps_)));
    const T c2 = T{1} - static_cast<T>(std::pow(config_.beta2, static_cast<double>(steps_)));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].values();
      auto g = clipped[i].values();
      auto m = first_[i].values();
      auto v = second_[i].values();
      std::vector<T> out(p.size()), mo(p.size()), vo(p.size());
      for (std::size_t k = 0; k < p.size(); ++k) {
        mo[k] = b1 * m[k] + (T{1} - b1) * g[k];
        vo[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
        out[k] = p[k] - lr * (mo[k] / c1) / (std::sqrt(vo[k] / c2) + eps);
      }
      next.emplace_back(params[i].shape(), std::move(out));
      m_next.emplace_back(params[i].shape(), std::move(mo));
      v_next.emplace_back(params[i].shape(), std::move(vo));
    }
    first_ = first_.with_tensors(std::move(m_next));
    second_ = second_.with_tensors(std::move(v_next));
    return params.with_tensors(std::move(next));
  }

  const OuterOptimizerConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return steps_; }
  const ParamSet<T>& first_moment() const noexcept { return first_; }
  const ParamSet<T>& second_moment() const noexcept { return second_; }

  void restore(std::size_t steps, ParamSet<T> first, ParamSet<T> second) {
    steps_ = steps;
    first_ = first_.with_tensors(first.tensors());
    second_ = second_.with_tensors(second.tensors());
  }

 private:
  std::vector<Tensor<T>> clip(const std::vector<Tensor<T>>& grads) const {
    if (config_.clip_norm <= 0) return grads;
    double sq = 0;
    for (const auto& g : grads)
      for (T v : g.values()) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (norm <= config_.clip_norm) return grads;
    const T factor = static_cast<T>(config_.clip_norm / norm);
    std::vector<Tensor<T>> out;
    out.reserve(grads.size());
    for (const auto& g : grads) {
      std::vector<T> v(g.values().begin(), g.values().end());
      for (auto& x : v) x *= factor;
      out.emplace_back(g.shape(), std::move(v));
    }
    return out;
  }

  OuterOptimizerConfig config_;
  ParamSet<T> first_;
  ParamSet<T> second_;
  std::size_t steps_ = 0;
};

}  // namespace alfa
