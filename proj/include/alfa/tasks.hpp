#pragma once

// Seeded task samplers. Task `index` of a (seed, stream) pair is a pure
// function of those three values.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "alfa/learner.hpp"

namespace alfa {

struct SinusoidFamily {
  double amplitude_min = 0.1, amplitude_max = 5.0;
  double frequency_min = 0.8, frequency_max = 1.2;
  double phase_min = 0.0, phase_max = std::numbers::pi;
  double input_min = -5.0, input_max = 5.0;
};

struct BlobFamily {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t input_dim = 2;
  std::size_t query_per_class = 15;
  double centroid_scale = 3.0;
  double noise_scale = 1.0;
};

struct SinusoidDescriptor {
  double amplitude = 0, frequency = 0, phase = 0;
};

struct BlobDescriptor {
  std::vector<std::vector<double>> centroids;
};

template <std::floating_point T>
struct Task {
  Batch<T> support;
  Batch<T> query;
  SinusoidDescriptor sinusoid;  // sinusoid tasks
  BlobDescriptor blobs;         // blob tasks
};

inline double sinusoid_value(const SinusoidDescriptor& d, double x) {
  return d.amplitude * std::sin(d.frequency * x + d.phase);
}

namespace detail {

template <std::floating_point T, class Rng>
Batch<T> sinusoid_points(const SinusoidFamily& f, const SinusoidDescriptor& d, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> ux(f.input_min, f.input_max);
  std::vector<T> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng);
    xs[i] = static_cast<T>(x);
    ys[i] = static_cast<T>(sinusoid_value(d, x));
  }
  return {Tensor<T>(Shape{n, 1}, std::move(xs)), Tensor<T>(Shape{n, 1}, std::move(ys))};
}

}  // namespace detail

/// Noise-free sine task with `k` support points and `query_size` query
/// points, drawn independently from the input range.
template <std::floating_point T>
Task<T> sample_sinusoid(const SinusoidFamily& family, std::size_t k, std::size_t query_size,
                        std::uint64_t seed, Stream stream, std::uint64_t index) {
  if (k == 0 || query_size == 0) throw ConfigError("sinusoid: k and query size must be positive");
  auto rng = make_rng(seed, stream, index);
  auto draw = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Task<T> task;
  task.sinusoid.amplitude = draw(family.amplitude_min, family.amplitude_max);
  task.sinusoid.frequency = draw(family.frequency_min, family.frequency_max);
  task.sinusoid.phase = draw(family.phase_min, family.phase_max);
  task.support = detail::sinusoid_points<T>(family, task.sinusoid, k, rng);
  task.query = detail::sinusoid_points<T>(family, task.sinusoid, query_size, rng);
  return task;
}

/// Isotropic Gaussian classes around per-task random centroids. Examples are
/// laid out class by class, so labels are balanced by construction.
template <std::floating_point T>
Task<T> sample_blobs(const BlobFamily& family, std::uint64_t seed, Stream stream, std::uint64_t index) {
  if (family.n_way < 2 || family.k_shot == 0 || family.query_per_class == 0 || family.input_dim == 0) {
    throw ConfigError("blobs: need n_way >= 2 and positive k_shot, query_per_class, input_dim");
  }
  auto rng = make_rng(seed, stream, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  Task<T> task;
  for (std::size_t c = 0; c < family.n_way; ++c) {
    std::vector<double> centroid(family.input_dim);
    for (auto& v : centroid) v = family.centroid_scale * normal(rng);
    task.blobs.centroids.push_back(std::move(centroid));
  }
  auto make = [&](std::size_t per_class) {
    const std::size_t rows = per_class * family.n_way;
    std::vector<T> xs(rows * family.input_dim), ys(rows);
    for (std::size_t c = 0; c < family.n_way; ++c) {
      for (std::size_t i = 0; i < per_class; ++i) {
        const std::size_t r = c * per_class + i;
        ys[r] = static_cast<T>(c);
        for (std::size_t d = 0; d < family.input_dim; ++d) {
          const double noise = family.noise_scale == 0.0 ? 0.0 : family.noise_scale * normal(rng);
          xs[r * family.input_dim + d] = static_cast<T>(task.blobs.centroids[c][d] + noise);
        }
      }
    }
    return Batch<T>{Tensor<T>(Shape{rows, family.input_dim}, std::move(xs)), Tensor<T>(Shape{rows}, std::move(ys))};
  };
  task.support = make(family.k_shot);
  task.query = make(family.query_per_class);
  return task;
}

/// Task family selected by string id ("sinusoid" or "blobs").
struct TaskConfig {
  std::string family = "sinusoid";
  std::size_t k_shot = 5;
  std::size_t query_size = 100;  // sinusoid query points
  SinusoidFamily sinusoid;
  BlobFamily blobs;

  void validate() const {
    if (family != "sinusoid" && family != "blobs") {
      throw ConfigError("tasks: unknown family '" + family + "' (expected sinusoid or blobs)");
    }
    if (k_shot == 0) throw ConfigError("tasks: k_shot must be positive");
    if (family == "sinusoid" && query_size == 0) throw ConfigError("tasks: query_size must be positive");
    if (family == "blobs" && blobs.n_way < 2) throw ConfigError("tasks: blobs need n_way >= 2");
  }
};

template <std::floating_point T>
Task<T> sample_task(const TaskConfig& cfg, std::uint64_t seed, Stream stream, std::uint64_t index) {
  if (cfg.family == "sinusoid") return sample_sinusoid<T>(cfg.sinusoid, cfg.k_shot, cfg.query_size, seed, stream, index);
  if (cfg.family == "blobs") {
    BlobFamily f = cfg.blobs;
    f.k_shot = cfg.k_shot;
    return sample_blobs<T>(f, seed, stream, index);
  }
  throw ConfigError("tasks: unknown family '" + cfg.family + "'");
}

}  // namespace alfa
