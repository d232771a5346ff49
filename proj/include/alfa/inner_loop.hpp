#pragma once

// Fast adaptation: S update steps from an initialization on one task's
// support set, under plain SGD or the adaptive rule
//   theta_{j+1} = beta_j (.) theta_j - alpha_j (.) grad L(theta_j)
// with alpha, beta chosen per the configured modes.

#include <optional>
#include <string>
#include <vector>

#include "alfa/hypergen.hpp"

namespace alfa {

enum class UpdateRule { sgd, alfa };

/// Source of a per-step, per-unit hyperparameter vector.
///  - constant: a fixed value from the config, not learned
///  - off: 1 (beta only; the decay term vanishes)
///  - meta_fixed_per_step / meta_fixed_per_layer: meta-learned values shared
///    across units / across steps, not conditioned on the learning state
///  - generated_per_step: one generated value per step, shared by all units
///  - generated_per_layer: generated per unit, one multiplier per unit
///  - generated_full: generated per unit with per-step per-unit multipliers
enum class HyperMode {
  constant,
  off,
  meta_fixed_per_step,
  meta_fixed_per_layer,
  generated_per_step,
  generated_per_layer,
  generated_full,
};

inline bool is_generated(HyperMode m) {
  return m == HyperMode::generated_per_step || m == HyperMode::generated_per_layer ||
         m == HyperMode::generated_full;
}

struct UpdateRuleConfig {
  UpdateRule rule = UpdateRule::alfa;
  HyperMode alpha_mode = HyperMode::generated_full;
  HyperMode beta_mode = HyperMode::generated_full;
  StateMode state_mode = StateMode::both;
  StatePreprocess state_preprocess = StatePreprocess::none;
  std::size_t steps = 5;
  double constant_alpha = 0.01;
  double constant_beta = 1.0;
  /// Detach inner-loop gradients from the meta-graph.
  bool first_order = false;
  /// Elementwise bound on inner-loop gradients; 0 disables it. A large bound
  /// only bites on runaway tasks and keeps them finite.
  double grad_clamp = 0.0;

  bool uses_generator() const { return is_generated(alpha_mode) || is_generated(beta_mode); }

  /// Plain SGD with the configured constant rate.
  static UpdateRuleConfig sgd(std::size_t steps, double rate) {
    UpdateRuleConfig c;
    c.rule = UpdateRule::sgd;
    c.alpha_mode = HyperMode::constant;
    c.beta_mode = HyperMode::off;
    c.steps = steps;
    c.constant_alpha = rate;
    return c;
  }

  void validate() const {
    if (steps == 0) throw ConfigError("update_rule: steps must be at least 1");
    if (!(grad_clamp >= 0.0)) throw ConfigError("update_rule: grad_clamp must be non-negative");
    if (rule == UpdateRule::sgd &&
        (alpha_mode != HyperMode::constant || beta_mode != HyperMode::off)) {
      throw ConfigError("update_rule: rule sgd requires alpha_mode constant and beta_mode off");
    }
    if (alpha_mode == HyperMode::off) throw ConfigError("update_rule: alpha_mode cannot be off");
  }
};

struct StepRecord {
  std::size_t step = 0;
  std::vector<double> alpha;  // per unit, as applied
  std::vector<double> beta;
  double support_loss = 0;
};

struct AdaptationTrace {
  std::vector<StepRecord> steps;
};

/// Meta-learned vectors of the fixed and per-step/per-layer generated modes.
template <std::floating_point T>
ParamSet<T> init_rule_params(const UpdateRuleConfig& cfg, const GeneratorConfig& gen, std::size_t units) {
  ParamSet<T> p;
  auto add_for = [&](HyperMode mode, const std::string& prefix, double fixed_init, double gen_init) {
    switch (mode) {
      case HyperMode::meta_fixed_per_step:
        p.add(prefix + "_step", Tensor<T>::full(Shape{cfg.steps}, static_cast<T>(fixed_init)));
        break;
      case HyperMode::meta_fixed_per_layer:
        p.add(prefix + "_layer", Tensor<T>::full(Shape{units}, static_cast<T>(fixed_init)));
        break;
      case HyperMode::generated_per_step:
        p.add(prefix + "_step", Tensor<T>::full(Shape{cfg.steps}, static_cast<T>(gen_init)));
        break;
      case HyperMode::generated_per_layer:
        p.add(prefix + "_layer", Tensor<T>::full(Shape{units}, static_cast<T>(gen_init)));
        break;
      default:
        break;
    }
  };
  add_for(cfg.alpha_mode, "alpha", cfg.constant_alpha, gen.alpha0_init);
  add_for(cfg.beta_mode, "beta", cfg.constant_beta, gen.beta0_init);
  return p;
}

template <std::floating_point T>
struct AdaptResult {
  ParamSet<T> params;
  AdaptationTrace trace;
};

namespace detail {

template <std::floating_point T>
Tensor<T> resolve_hyper(HyperMode mode, bool is_alpha, std::size_t step, std::size_t units,
                        const UpdateRuleConfig& cfg, const HyperGenerator<T>* gen,
                        const ParamSet<T>& rule, const Tensor<T>& raw) {
  const std::string prefix = is_alpha ? "alpha" : "beta";
  const std::size_t head = is_alpha ? 0 : units;
  const Shape vec{units};
  switch (mode) {
    case HyperMode::constant:
      return Tensor<T>::full(vec, static_cast<T>(is_alpha ? cfg.constant_alpha : cfg.constant_beta));
    case HyperMode::off:
      return Tensor<T>::ones(vec);
    case HyperMode::meta_fixed_per_step:
      return broadcast_repeat(slice(rule.at(prefix + "_step"), step, 1), vec);
    case HyperMode::meta_fixed_per_layer:
      return rule.at(prefix + "_layer");
    case HyperMode::generated_per_step: {
      auto shared = reshape(mean(slice(raw, head, units)), Shape{1});
      return broadcast_repeat(hadamard(slice(rule.at(prefix + "_step"), step, 1), shared), vec);
    }
    case HyperMode::generated_per_layer:
      return hadamard(rule.at(prefix + "_layer"), slice(raw, head, units));
    case HyperMode::generated_full: {
      const auto& post = is_alpha ? gen->alpha0() : gen->beta0();
      return hadamard(slice(post, step * units, units), slice(raw, head, units));
    }
  }
  throw ConfigError("update_rule: unknown mode");
}

template <std::floating_point T>
std::vector<double> to_doubles(const Tensor<T>& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

}  // namespace detail

/// Runs the inner loop inside `graph`. Detached inputs become constants,
/// except `theta0`, which is registered as a leaf when detached so support
/// gradients can be taken. The returned parameters stay attached to `graph`.
template <std::floating_point T>
AdaptResult<T> adapt(Graph<T>& graph, const LearnerSpec& spec, const ParamSet<T>& theta0,
                     const HyperGenerator<T>* gen, const ParamSet<T>& rule,
                     const Batch<T>& support, const UpdateRuleConfig& cfg, const UnitMap& map) {
  cfg.validate();
  if (support.size() == 0) throw ShapeError("adapt: empty support set");
  if (cfg.uses_generator()) {
    if (!gen) throw ConfigError("adapt: a generated mode is active but no generator was given");
    if (gen->units() != map.units() || gen->steps() != cfg.steps) {
      throw ConfigError("adapt: generator built for N=" + std::to_string(gen->units()) + ", S=" +
                        std::to_string(gen->steps()) + " but run has N=" + std::to_string(map.units()) +
                        ", S=" + std::to_string(cfg.steps));
    }
  }
  const std::size_t units = map.units();
  ParamSet<T> theta = theta0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!theta[i].attached()) theta[i] = graph.variable(theta[i]);
  }

  AdaptResult<T> result;
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    auto loss = task_loss(spec, theta, support);
    const double loss_value = static_cast<double>(loss.item());
    if (!std::isfinite(loss_value)) {
      throw NonFiniteError("adapt: non-finite support loss at step " + std::to_string(j), static_cast<long>(j));
    }
    auto wrt = theta.tensors();
    auto grads = grad(loss, std::span<const Tensor<T>>(wrt), {.retain_graph = !cfg.first_order});
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i].all_finite()) {
        throw NonFiniteError("adapt: non-finite gradient for '" + theta.name(i) + "' at step " +
                                 std::to_string(j),
                             static_cast<long>(j));
      }
      if (cfg.grad_clamp > 0) grads[i] = clamp(grads[i], static_cast<T>(cfg.grad_clamp));
    }

    StepRecord record;
    record.step = j;
    record.support_loss = loss_value;
    std::vector<Tensor<T>> next;
    next.reserve(theta.size());

    if (cfg.rule == UpdateRule::sgd) {
      const auto rate = static_cast<T>(cfg.constant_alpha);
      for (std::size_t i = 0; i < theta.size(); ++i) next.push_back(sub(theta[i], scale(grads[i], rate)));
      record.alpha.assign(units, cfg.constant_alpha);
      record.beta.assign(units, 1.0);
    } else {
      Tensor<T> raw;
      if (cfg.uses_generator()) {
        auto state = compute_state(theta, std::span<const Tensor<T>>(grads), map);
        state = preprocess_state(mask_state(state, cfg.state_mode), cfg.state_preprocess, cfg.state_mode);
        raw = generate_raw(*gen, state);
      }
      auto alpha = detail::resolve_hyper(cfg.alpha_mode, true, j, units, cfg, gen, rule, raw);
      auto beta = detail::resolve_hyper(cfg.beta_mode, false, j, units, cfg, gen, rule, raw);
      auto alphas = expand_units(alpha, theta, map);
      auto betas = expand_units(beta, theta, map);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        Tensor<T> b = betas[i];
        if (gen) {
          if (const auto* decay = gen->decay(theta.name(i))) {
            b = gen->config().decay_composition == DecayComposition::product ? hadamard(b, *decay) : *decay;
          }
        }
        next.push_back(sub(hadamard(b, theta[i]), hadamard(alphas[i], grads[i])));
      }
      record.alpha = detail::to_doubles(alpha);
      record.beta = detail::to_doubles(beta);
    }
    theta = theta.with_tensors(std::move(next));
    result.trace.steps.push_back(std::move(record));
  }
  result.params = std::move(theta);
  return result;
}

template <std::floating_point T>
AdaptResult<T> adapt(Graph<T>& graph, const LearnerSpec& spec, const ParamSet<T>& theta0,
                     const HyperGenerator<T>* gen, const ParamSet<T>& rule,
                     const Batch<T>& support, const UpdateRuleConfig& cfg) {
  return adapt(graph, spec, theta0, gen, rule, support, cfg, unit_map(spec));
}

/// Self-contained adaptation; returns detached parameters.
template <std::floating_point T>
AdaptResult<T> adapt(const LearnerSpec& spec, const ParamSet<T>& theta0, const HyperGenerator<T>* gen,
                     const ParamSet<T>& rule, const Batch<T>& support, const UpdateRuleConfig& cfg) {
  Graph<T> graph;
  auto r = adapt(graph, spec, theta0.detach(), gen, rule, support, cfg, unit_map(spec));
  r.params = r.params.detach();
  return r;
}

template <std::floating_point T>
struct QueryResult {
  Tensor<T> loss;                  // scalar, attached when the params are
  std::optional<double> accuracy;  // classification only
};

template <std::floating_point T>
QueryResult<T> eval_query(const LearnerSpec& spec, const ParamSet<T>& adapted, const Batch<T>& query) {
  if (query.size() == 0) throw ShapeError("eval_query: empty query set");
  auto pred = forward(spec, adapted, query.x);
  if (spec.kind == LearnerKind::regression_mlp) return {mse_loss(pred, query.y), std::nullopt};
  return {softmax_cross_entropy(pred, query.y), accuracy(pred, query.y)};
}

}  // namespace alfa
