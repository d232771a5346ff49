#pragma once

// Hyperparameter generator: a 3-layer MLP (2N -> 2N -> 2N -> 2N, ReLU
// between layers, linear output) over the learning state, scaled by
// per-step, per-unit post-multipliers. Output entries 0..N-1 drive the
// learning rates, N..2N-1 the weight-decay multipliers.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "alfa/learning_state.hpp"

namespace alfa {

/// How the per-parameter decay term combines with the generated beta.
enum class DecayComposition { product, replace };

struct GeneratorConfig {
  bool bias = false;
  double alpha0_init = 0.01;
  double beta0_init = 1.0;
  /// Initial value of the output-layer bias (only with `bias`).
  double output_bias_init = 0.0;
  /// Multiplier on the output layer's init stddev; 0 starts the generator
  /// at a constant output (its bias).
  double output_weight_scale = 1.0;
  /// Meta-learnable per-parameter decay multiplier for random-init training.
  bool per_param_decay = false;
  DecayComposition decay_composition = DecayComposition::product;
};

template <std::floating_point T>
struct HyperParamsPerStep {
  Tensor<T> alpha;  // {N}
  Tensor<T> beta;   // {N}
};

template <std::floating_point T>
class HyperGenerator {
 public:
  HyperGenerator() = default;
  HyperGenerator(std::size_t units, std::size_t steps, GeneratorConfig config, ParamSet<T> params)
      : units_(units), steps_(steps), config_(config), params_(std::move(params)) {}

  std::size_t units() const noexcept { return units_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t width() const noexcept { return 2 * units_; }
  const GeneratorConfig& config() const noexcept { return config_; }

  const ParamSet<T>& params() const noexcept { return params_; }
  ParamSet<T>& params() noexcept { return params_; }

  const Tensor<T>& weight(std::size_t layer) const { return params_.at(mlp_weight_name(layer)); }
  const Tensor<T>* bias(std::size_t layer) const {
    auto i = params_.find(mlp_bias_name(layer));
    return i ? &params_[*i] : nullptr;
  }
  const Tensor<T>& alpha0() const { return params_.at("alpha0"); }
  const Tensor<T>& beta0() const { return params_.at("beta0"); }

  /// Per-parameter decay tensor for learner entry `name`, if enabled.
  const Tensor<T>* decay(std::string_view name) const {
    auto i = params_.find("decay." + std::string(name));
    return i ? &params_[*i] : nullptr;
  }

  /// MLP weights, biases and post-multipliers. With bias disabled this is
  /// 12N^2 + 2SN. The per-parameter decay term is counted separately.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& e : params_.entries())
      if (!e.name.starts_with("decay.")) n += e.tensor.size();
    return n;
  }
  std::size_t decay_count() const { return params_.scalar_count() - trainable_count(); }

  /// Replaces the MLP output with fixed values (testing and reductions to
  /// plain SGD). Cleared with std::nullopt.
  void set_output_override(std::optional<std::vector<T>> values) {
    if (values && values->size() != width()) {
      throw ShapeError("generator: override needs " + std::to_string(width()) + " values");
    }
    override_ = std::move(values);
  }
  const std::optional<std::vector<T>>& output_override() const noexcept { return override_; }

  HyperGenerator attach(Graph<T>& graph) const {
    HyperGenerator out = *this;
    out.params_ = params_.attach(graph);
    return out;
  }
  HyperGenerator with_params(ParamSet<T> params) const {
    HyperGenerator out = *this;
    out.params_ = params_.with_tensors(params.tensors());
    return out;
  }

  static std::string mlp_weight_name(std::size_t layer) { return "mlp" + std::to_string(layer) + ".weight"; }
  static std::string mlp_bias_name(std::size_t layer) { return "mlp" + std::to_string(layer) + ".bias"; }

 private:
  std::size_t units_ = 0;
  std::size_t steps_ = 0;
  GeneratorConfig config_;
  ParamSet<T> params_;
  std::optional<std::vector<T>> override_;
};

/// `learner` supplies the shapes of the per-parameter decay tensors; it is
/// only read when `config.per_param_decay` is set.
template <std::floating_point T>
HyperGenerator<T> init_generator(std::size_t units, std::size_t steps, std::uint64_t seed,
                                 const GeneratorConfig& config, const ParamSet<T>* learner = nullptr) {
  if (units == 0 || steps == 0) throw ConfigError("generator: N and S must be at least 1");
  const std::size_t width = 2 * units;
  auto rng = make_rng(seed, Stream::generator_init);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(width));
  ParamSet<T> params;
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<T> w(width * width);
    const double sd = l == 2 ? stddev * config.output_weight_scale : stddev;
    for (auto& v : w) v = static_cast<T>(truncated_normal(rng, stddev) / stddev * sd);
    params.add(HyperGenerator<T>::mlp_weight_name(l), Tensor<T>(Shape{width, width}, std::move(w)));
    if (config.bias) {
      const T b = l == 2 ? static_cast<T>(config.output_bias_init) : T{0};
      params.add(HyperGenerator<T>::mlp_bias_name(l), Tensor<T>::full(Shape{width}, b));
    }
  }
  params.add("alpha0", Tensor<T>::full(Shape{steps, units}, static_cast<T>(config.alpha0_init)));
  params.add("beta0", Tensor<T>::full(Shape{steps, units}, static_cast<T>(config.beta0_init)));
  if (config.per_param_decay) {
    if (!learner) throw ConfigError("generator: per-parameter decay needs the learner's parameters");
    for (const auto& e : learner->entries()) params.add("decay." + e.name, Tensor<T>::ones(e.tensor.shape()));
  }
  return HyperGenerator<T>(units, steps, config, std::move(params));
}

/// Raw MLP output h (length 2N) for a learning state.
template <std::floating_point T>
Tensor<T> generate_raw(const HyperGenerator<T>& gen, const LearningState<T>& state) {
  const std::size_t width = gen.width();
  if (state.values.size() != width) {
    throw ShapeError("generate: state length " + std::to_string(state.values.size()) +
                     " does not match 2N = " + std::to_string(width));
  }
  if (gen.output_override()) return Tensor<T>(Shape{width}, *gen.output_override());
  auto h = reshape(state.values, Shape{1, width});
  for (std::size_t l = 0; l < 3; ++l) {
    h = matmul(h, gen.weight(l));
    if (const auto* b = gen.bias(l)) h = add(h, reshape(*b, Shape{1, width}));
    if (l < 2) h = relu(h);
  }
  return reshape(h, Shape{width});
}

/// Learning rates and decay multipliers for inner step `step`:
/// alpha[k] = alpha0[step, k] * h[k], beta[k] = beta0[step, k] * h[N + k].
template <std::floating_point T>
HyperParamsPerStep<T> generate(const HyperGenerator<T>& gen, const LearningState<T>& state,
                               std::size_t step) {
  if (step >= gen.steps()) {
    throw ShapeError("generate: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(gen.steps()) + ")");
  }
  const std::size_t n = gen.units();
  auto h = generate_raw(gen, state);
  auto alpha = hadamard(slice(gen.alpha0(), step * n, n), slice(h, 0, n));
  auto beta = hadamard(slice(gen.beta0(), step * n, n), slice(h, n, n));
  return {alpha, beta};
}

/// Broadcasts a per-unit vector {N} to the full shape of every parameter.
template <std::floating_point T>
std::vector<Tensor<T>> expand_units(const Tensor<T>& per_unit, const ParamSet<T>& params,
                                    const UnitMap& map) {
  if (per_unit.size() != map.units() || map.entries() != params.size()) {
    throw ShapeError("expand_to_params: " + std::to_string(per_unit.size()) + " unit values for " +
                     std::to_string(map.units()) + " units");
  }
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(broadcast_repeat(slice(per_unit, map.unit_of[i], 1), params[i].shape()));
  }
  return out;
}

template <std::floating_point T>
struct ExpandedHyperParams {
  std::vector<Tensor<T>> alpha;
  std::vector<Tensor<T>> beta;
};

template <std::floating_point T>
ExpandedHyperParams<T> expand_to_params(const HyperParamsPerStep<T>& h, const ParamSet<T>& params,
                                        const UnitMap& map) {
  return {expand_units(h.alpha, params, map), expand_units(h.beta, params, map)};
}

template <std::floating_point T>
ExpandedHyperParams<T> expand_to_params(const HyperParamsPerStep<T>& h, const ParamSet<T>& params) {
  return expand_to_params(h, params, UnitMap::identity(params));
}

}  // namespace alfa
