#pragma once

// Functional MLP base learner. Parameters are passed explicitly so adapted
// parameter sets produced inside the inner loop flow straight back into
// `forward` and stay differentiable.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "alfa/param_set.hpp"
#include "alfa/random.hpp"

namespace alfa {

enum class LearnerKind { regression_mlp, classification_mlp };
enum class Activation { relu, leaky_relu };

/// How parameter tensors map to hyperparameter units.
///  - per_tensor: every weight and every bias is its own unit.
///  - per_weight_tensor_only: one unit per linear layer; the learning state
///    reads the weight matrix only and the bias shares its layer's values.
enum class UnitGrouping { per_tensor, per_weight_tensor_only };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::regression_mlp;
  std::vector<std::size_t> hidden_sizes{40, 40};
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  Activation activation = Activation::relu;
  UnitGrouping units = UnitGrouping::per_tensor;

  std::size_t layer_count() const { return hidden_sizes.size() + 1; }

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw ConfigError("learner: dims must be positive");
    for (auto h : hidden_sizes)
      if (h == 0) throw ConfigError("learner: hidden sizes must be positive");
    if (kind == LearnerKind::classification_mlp && output_dim < 2) {
      throw ConfigError("learner: classification needs output_dim >= 2");
    }
  }

  static LearnerSpec regression(std::vector<std::size_t> hidden) {
    LearnerSpec s;
    s.hidden_sizes = std::move(hidden);
    return s;
  }
  /// Sinusoid presets: two hidden layers of 40 units, three of 80.
  static LearnerSpec sinusoid_2x40() { return regression({40, 40}); }
  static LearnerSpec sinusoid_3x80() { return regression({80, 80, 80}); }

  static LearnerSpec classification(std::size_t input_dim, std::vector<std::size_t> hidden,
                                    std::size_t classes) {
    LearnerSpec s;
    s.kind = LearnerKind::classification_mlp;
    s.input_dim = input_dim;
    s.output_dim = classes;
    s.hidden_sizes = std::move(hidden);
    return s;
  }
};

/// Assignment of parameter entries to hyperparameter units.
struct UnitMap {
  std::vector<std::size_t> unit_of;   // per parameter entry
  std::vector<bool> feeds_state;      // entry contributes to the learning state
  std::vector<std::string> unit_names;

  std::size_t units() const noexcept { return unit_names.size(); }
  std::size_t entries() const noexcept { return unit_of.size(); }

  /// Every entry its own unit.
  template <std::floating_point T>
  static UnitMap identity(const ParamSet<T>& params) {
    UnitMap m;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m.unit_of.push_back(i);
      m.feeds_state.push_back(true);
      m.unit_names.push_back(params.name(i));
    }
    return m;
  }
};

inline std::string weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
inline std::string bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

inline UnitMap unit_map(const LearnerSpec& spec) {
  UnitMap m;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    if (spec.units == UnitGrouping::per_tensor) {
      m.unit_of.push_back(2 * l);
      m.unit_of.push_back(2 * l + 1);
      m.feeds_state.push_back(true);
      m.feeds_state.push_back(true);
      m.unit_names.push_back(weight_name(l));
      m.unit_names.push_back(bias_name(l));
    } else {
      m.unit_of.push_back(l);
      m.unit_of.push_back(l);
      m.feeds_state.push_back(true);
      m.feeds_state.push_back(false);
      m.unit_names.push_back("layer" + std::to_string(l));
    }
  }
  return m;
}

/// Weights: truncated normal with stddev 1/sqrt(fan_in). Biases: zero.
template <std::floating_point T>
ParamSet<T> init_params(const LearnerSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto rng = make_rng(seed, Stream::learner_init);
  ParamSet<T> params;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t fan_out = l < spec.hidden_sizes.size() ? spec.hidden_sizes[l] : spec.output_dim;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<T> w(fan_in * fan_out);
    for (auto& v : w) v = static_cast<T>(truncated_normal(rng, stddev));
    params.add(weight_name(l), Tensor<T>(Shape{fan_in, fan_out}, std::move(w)));
    params.add(bias_name(l), Tensor<T>::zeros(Shape{fan_out}));
    fan_in = fan_out;
  }
  return params;
}

/// Predictions for a (batch, input_dim) input.
template <std::floating_point T>
Tensor<T> forward(const LearnerSpec& spec, const ParamSet<T>& params, const Tensor<T>& x) {
  const std::size_t layers = spec.layer_count();
  if (params.size() != 2 * layers) {
    throw ShapeError("forward: expected " + std::to_string(2 * layers) + " parameter tensors, got " +
                     std::to_string(params.size()));
  }
  if (x.rank() != 2 || x.shape()[1] != spec.input_dim) {
    throw ShapeError("forward: input shape " + shape_string(x.shape()) + " does not match input_dim " +
                     std::to_string(spec.input_dim));
  }
  const std::size_t batch = x.shape()[0];
  Tensor<T> h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = params[2 * l];
    const auto& b = params[2 * l + 1];
    if (w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.shape()[1]) {
      throw ShapeError("forward: layer " + std::to_string(l) + " weight " + shape_string(w.shape()) +
                       " and bias " + shape_string(b.shape()) + " are inconsistent");
    }
    h = add(matmul(h, w), broadcast_repeat(b, Shape{batch, w.shape()[1]}));
    if (l + 1 < layers) h = spec.activation == Activation::relu ? relu(h) : leaky_relu(h);
  }
  return h;
}

template <std::floating_point T>
struct Batch {
  Tensor<T> x;  // (batch, input_dim)
  Tensor<T> y;  // (batch, output_dim) targets, or (batch) class indices

  std::size_t size() const { return x.empty() ? 0 : x.shape()[0]; }
};

/// MSE for regression, mean softmax cross-entropy for classification.
template <std::floating_point T>
Tensor<T> task_loss(const LearnerSpec& spec, const ParamSet<T>& params, const Batch<T>& batch) {
  if (batch.size() == 0) throw ShapeError("task_loss: empty batch");
  auto pred = forward(spec, params, batch.x);
  if (spec.kind == LearnerKind::regression_mlp) return mse_loss(pred, batch.y);
  return softmax_cross_entropy(pred, batch.y);
}

/// Fraction of rows whose arg-max logit equals the label.
template <std::floating_point T>
double accuracy(const Tensor<T>& logits, const Tensor<T>& labels) {
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  auto v = logits.values();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    auto first = v.begin() + static_cast<std::ptrdiff_t>(r * cols);
    auto best = static_cast<std::size_t>(std::max_element(first, first + static_cast<std::ptrdiff_t>(cols)) - first);
    if (static_cast<T>(best) == labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows);
}

}  // namespace alfa
