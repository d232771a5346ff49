#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "alfa/tasks.hpp"

using namespace alfa;

namespace {

/// 1-nearest-centroid classifier using centroids estimated from the support set.
double nearest_centroid_accuracy(const Task<double>& t, std::size_t n_way, std::size_t dim) {
  std::vector<std::vector<double>> centre(n_way, std::vector<double>(dim, 0.0));
  std::vector<double> count(n_way, 0.0);
  const auto sx = t.support.x.values();
  const auto sy = t.support.y.values();
  for (std::size_t r = 0; r < sy.size(); ++r) {
    const auto c = static_cast<std::size_t>(sy[r]);
    count[c] += 1;
    for (std::size_t d = 0; d < dim; ++d) centre[c][d] += sx[r * dim + d];
  }
  for (std::size_t c = 0; c < n_way; ++c)
    for (auto& v : centre[c]) v /= count[c];
  const auto qx = t.query.x.values();
  const auto qy = t.query.y.values();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < qy.size(); ++r) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < n_way; ++c) {
      double d2 = 0;
      for (std::size_t d = 0; d < dim; ++d) d2 += (qx[r * dim + d] - centre[c][d]) * (qx[r * dim + d] - centre[c][d]);
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    hits += best == static_cast<std::size_t>(qy[r]);
  }
  return static_cast<double>(hits) / static_cast<double>(qy.size());
}

}  // namespace

TEST(Sinusoid, ValueExamples) {
  EXPECT_DOUBLE_EQ(sinusoid_value({1, 1, 0}, std::numbers::pi / 2), 1.0);
  EXPECT_NEAR(sinusoid_value({2, 1, std::numbers::pi}, 0.0), 0.0, 1e-15);
}

TEST(Sinusoid, ParameterRangesOverManyTasks) {
  const SinusoidFamily f;
  double amin = INFINITY, amax = -INFINITY, fmin = INFINITY, fmax = -INFINITY, pmin = INFINITY, pmax = -INFINITY;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto t = sample_sinusoid<double>(f, 5, 1, 3, Stream::meta_train, i);
    amin = std::min(amin, t.sinusoid.amplitude);
    amax = std::max(amax, t.sinusoid.amplitude);
    fmin = std::min(fmin, t.sinusoid.frequency);
    fmax = std::max(fmax, t.sinusoid.frequency);
    pmin = std::min(pmin, t.sinusoid.phase);
    pmax = std::max(pmax, t.sinusoid.phase);
  }
  EXPECT_GE(amin, 0.1);
  EXPECT_LE(amax, 5.0);
  EXPECT_GE(fmin, 0.8);
  EXPECT_LE(fmax, 1.2);
  EXPECT_GE(pmin, 0.0);
  EXPECT_LE(pmax, std::numbers::pi);
  // The scan actually spans the ranges.
  EXPECT_LT(amin, 0.2);
  EXPECT_GT(amax, 4.9);
}

TEST(Sinusoid, TargetsAreExactAndBounded) {
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto t = sample_sinusoid<double>(SinusoidFamily{}, 10, 100, 1, Stream::meta_eval, i);
    ASSERT_EQ(t.support.x.shape(), (Shape{10, 1}));
    ASSERT_EQ(t.query.x.shape(), (Shape{100, 1}));
    for (const auto* b : {&t.support, &t.query}) {
      for (std::size_t r = 0; r < b->size(); ++r) {
        const double x = b->x[r], y = b->y[r];
        EXPECT_GE(x, -5.0);
        EXPECT_LE(x, 5.0);
        EXPECT_EQ(y, t.sinusoid.amplitude * std::sin(t.sinusoid.frequency * x + t.sinusoid.phase));
        EXPECT_LE(std::abs(y), t.sinusoid.amplitude);
      }
    }
  }
}

TEST(Sinusoid, DeterministicAndStreamsDisjoint) {
  const SinusoidFamily f;
  const auto a = sample_sinusoid<double>(f, 5, 20, 7, Stream::meta_train, 3);
  const auto b = sample_sinusoid<double>(f, 5, 20, 7, Stream::meta_train, 3);
  EXPECT_TRUE(identical(a.support.x, b.support.x));
  EXPECT_TRUE(identical(a.query.y, b.query.y));
  std::set<double> train, eval;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    train.insert(sample_sinusoid<double>(f, 1, 1, 7, Stream::meta_train, i).sinusoid.amplitude);
    eval.insert(sample_sinusoid<double>(f, 1, 1, 7, Stream::meta_eval, i).sinusoid.amplitude);
  }
  for (double v : eval) EXPECT_EQ(train.count(v), 0u);
}

TEST(Sinusoid, RejectsEmptySets) {
  EXPECT_THROW(sample_sinusoid<double>(SinusoidFamily{}, 0, 10, 0, Stream::test, 0), ConfigError);
}

TEST(Blobs, NoiselessClassesAreSeparable) {
  BlobFamily f;
  f.noise_scale = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto t = sample_blobs<double>(f, 2, Stream::test, i);
    EXPECT_EQ(nearest_centroid_accuracy(t, f.n_way, f.input_dim), 1.0);
  }
}

TEST(Blobs, IdenticalCentroidsGiveChance) {
  BlobFamily f;
  f.n_way = 2;
  f.centroid_scale = 0.0;
  double total = 0;
  const int tasks = 400;
  for (int i = 0; i < tasks; ++i) {
    total += nearest_centroid_accuracy(sample_blobs<double>(f, 3, Stream::test, i), 2, f.input_dim);
  }
  EXPECT_NEAR(total / tasks, 0.5, 0.03);
}

TEST(Blobs, LabelsBalancedPerTask) {
  BlobFamily f;
  f.k_shot = 3;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto t = sample_blobs<double>(f, 4, Stream::meta_train, i);
    std::vector<int> s(f.n_way, 0), q(f.n_way, 0);
    for (double y : t.support.y.values()) ++s[static_cast<std::size_t>(y)];
    for (double y : t.query.y.values()) ++q[static_cast<std::size_t>(y)];
    for (std::size_t c = 0; c < f.n_way; ++c) {
      ASSERT_EQ(s[c], 3);
      ASSERT_EQ(q[c], 15);
    }
  }
}

TEST(Blobs, RejectsBadFamily) {
  BlobFamily f;
  f.n_way = 1;
  EXPECT_THROW(sample_blobs<double>(f, 0, Stream::test, 0), ConfigError);
}

TEST(TaskConfig, DispatchesByFamily) {
  TaskConfig c;
  c.k_shot = 10;
  EXPECT_EQ(sample_task<double>(c, 0, Stream::test, 0).support.size(), 10u);
  c.family = "blobs";
  c.k_shot = 2;
  EXPECT_EQ(sample_task<double>(c, 0, Stream::test, 0).support.size(), 10u);
  c.family = "images";
  EXPECT_THROW(c.validate(), ConfigError);
}
