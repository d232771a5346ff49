#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace alfa {

/// Independent random streams. The stream id is mixed into every seed, so
/// meta-train and meta-eval tasks never share a generator state.
enum class Stream : std::uint32_t {
  learner_init = 1,
  generator_init = 2,
  rule_init = 3,
  meta_train = 4,
  meta_eval = 5,
  test = 99,
};

/// Generator keyed by (seed, stream, index). Task `index` of a stream can be
/// regenerated without replaying earlier ones.
inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Normal(0, stddev) restricted to two standard deviations by rejection.
template <class Rng>
double truncated_normal(Rng& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double z = normal(rng);
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

}  // namespace alfa
