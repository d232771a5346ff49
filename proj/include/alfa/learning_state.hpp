#pragma once

// Layer-wise reduction of the learner's (gradient, weight) state into the
// 2N-vector that conditions the hyperparameter generator. Layout:
// [mean grad of unit 0 .. unit N-1, mean weight of unit 0 .. unit N-1].

#include <cmath>
#include <vector>

#include "alfa/learner.hpp"

namespace alfa {

enum class StateMode { both, weight_only, gradient_only };
enum class StatePreprocess { none, standardize };

template <std::floating_point T>
struct LearningState {
  Tensor<T> values;  // shape {2N}
  std::size_t units = 0;

  T gradient_mean(std::size_t unit) const { return values[unit]; }
  T weight_mean(std::size_t unit) const { return values[units + unit]; }
};

/// Means of each unit's gradients and weights. Differentiable through both
/// halves when the inputs are attached.
template <std::floating_point T>
LearningState<T> compute_state(const ParamSet<T>& params, std::span<const Tensor<T>> grads,
                               const UnitMap& map) {
  if (grads.size() != params.size()) {
    throw ShapeError("compute_state: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  if (map.entries() != params.size()) {
    throw ShapeError("compute_state: unit map covers " + std::to_string(map.entries()) +
                     " entries, params have " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw ShapeError("compute_state: gradient " + shape_string(grads[i].shape()) +
                       " does not match parameter '" + params.name(i) + "' " +
                       shape_string(params[i].shape()));
    }
  }
  const std::size_t n = map.units();
  auto unit_mean = [&](auto pick, std::size_t unit) {
    std::vector<Tensor<T>> parts;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (map.unit_of[i] == unit && map.feeds_state[i]) parts.push_back(pick(i));
    if (parts.empty()) throw ShapeError("compute_state: unit " + std::to_string(unit) + " has no state source");
    return parts.size() == 1 ? mean(parts[0]) : mean(concat(std::span<const Tensor<T>>(parts)));
  };
  std::vector<Tensor<T>> entries;
  entries.reserve(2 * n);
  for (std::size_t u = 0; u < n; ++u) entries.push_back(unit_mean([&](std::size_t i) { return grads[i]; }, u));
  for (std::size_t u = 0; u < n; ++u) entries.push_back(unit_mean([&](std::size_t i) { return params[i]; }, u));
  return {concat(std::span<const Tensor<T>>(entries)), n};
}

template <std::floating_point T>
LearningState<T> compute_state(const ParamSet<T>& params, std::span<const Tensor<T>> grads) {
  return compute_state(params, grads, UnitMap::identity(params));
}

/// Zeroes the excluded half; the width stays 2N in every mode.
template <std::floating_point T>
LearningState<T> mask_state(const LearningState<T>& state, StateMode mode) {
  if (mode == StateMode::both) return state;
  const std::size_t n = state.units;
  std::vector<T> mask(2 * n, T{0});
  const std::size_t keep_from = mode == StateMode::weight_only ? n : 0;
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(keep_from),
            mask.begin() + static_cast<std::ptrdiff_t>(keep_from + n), T{1});
  return {hadamard(state.values, Tensor<T>(Shape{2 * n}, std::move(mask))), n};
}

/// Optional standardization. Only the entries kept by `mask` enter the
/// statistics and the excluded half stays zero. Mean and spread are treated
/// as constants for differentiation.
template <std::floating_point T>
LearningState<T> preprocess_state(const LearningState<T>& state, StatePreprocess mode,
                                  StateMode mask = StateMode::both) {
  if (mode == StatePreprocess::none) return state;
  const std::size_t n = state.units;
  const std::size_t lo = mask == StateMode::weight_only ? n : 0;
  const std::size_t hi = mask == StateMode::gradient_only ? n : 2 * n;
  auto v = state.values.values();
  const auto count = static_cast<T>(hi - lo);
  T mu{0};
  for (std::size_t i = lo; i < hi; ++i) mu += v[i];
  mu /= count;
  T var{0};
  for (std::size_t i = lo; i < hi; ++i) var += (v[i] - mu) * (v[i] - mu);
  const T sd = std::sqrt(var / count) + static_cast<T>(1e-8);
  std::vector<T> shift(2 * n, T{0});
  std::fill(shift.begin() + static_cast<std::ptrdiff_t>(lo), shift.begin() + static_cast<std::ptrdiff_t>(hi), mu);
  auto centered = sub(state.values, Tensor<T>(Shape{2 * n}, std::move(shift)));
  return mask_state(LearningState<T>{scale(centered, T{1} / sd), n}, mask);
}

}  // namespace alfa
