#pragma once

// Finite-difference self-checks: every op's backward rule, the second-order
// path, and the full meta-gradient through the inner loop.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "alfa/meta_trainer.hpp"

namespace alfa {

/// |a - f| / max(|a|, |f|, floor). The floor keeps entries whose true value
/// is ~0 from turning finite-difference noise into huge ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct SuiteResult {
  std::string suite;
  double max_error = 0;
  double tolerance = 0;
  std::string worst;  // where max_error occurred
  std::size_t checked = 0;

  bool ok() const { return max_error <= tolerance; }
};

struct GradcheckOptions {
  /// "tiny": 1-4-1 learner, S=2. "small": 1-8-8-1 learner, S=3.
  std::string size = "tiny";
  std::uint64_t seed = 0;
  std::size_t op_trials = 8;     // per op kind
  std::size_t meta_seeds = 3;    // consecutive seeds from `seed`
  double op_tolerance = 1e-6;
  double meta_tolerance = 1e-4;
  double step = 1e-6;
};

namespace detail {

using Inputs = std::vector<Tensor<double>>;

struct OpCase {
  Op op;
  std::vector<Shape> shapes;
  std::vector<bool> differentiable;
  std::function<Tensor<double>(const Inputs&)> apply;
  bool away_from_zero = false;  // kinked ops
};

inline std::vector<OpCase> op_cases() {
  const Shape m{3, 4};
  return {
      {Op::add, {m, m}, {true, true}, [](const Inputs& x) { return add(x[0], x[1]); }},
      {Op::sub, {m, m}, {true, true}, [](const Inputs& x) { return sub(x[0], x[1]); }},
      {Op::hadamard, {m, m}, {true, true}, [](const Inputs& x) { return hadamard(x[0], x[1]); }},
      {Op::scale, {m}, {true}, [](const Inputs& x) { return scale(x[0], 0.7); }},
      {Op::matmul, {m, Shape{4, 2}}, {true, true}, [](const Inputs& x) { return matmul(x[0], x[1]); }},
      {Op::transpose, {m}, {true}, [](const Inputs& x) { return transpose(x[0]); }},
      {Op::relu, {m}, {true}, [](const Inputs& x) { return relu(x[0]); }, true},
      {Op::leaky_relu, {m}, {true}, [](const Inputs& x) { return leaky_relu(x[0]); }, true},
      {Op::clamp, {m}, {true}, [](const Inputs& x) { return clamp(x[0], 0.5); }},
      {Op::mean, {m}, {true}, [](const Inputs& x) { return mean(x[0]); }},
      {Op::sum, {m}, {true}, [](const Inputs& x) { return sum(x[0]); }},
      {Op::square, {m}, {true}, [](const Inputs& x) { return square(x[0]); }},
      {Op::mse_loss, {Shape{5, 1}, Shape{5, 1}}, {true, true}, [](const Inputs& x) { return mse_loss(x[0], x[1]); }},
      {Op::softmax, {m}, {true}, [](const Inputs& x) { return softmax(x[0]); }},
      {Op::softmax_cross_entropy, {Shape{4, 3}}, {true},
       [](const Inputs& x) {
         return softmax_cross_entropy(x[0], Tensor<double>(Shape{4}, std::vector<double>{0, 2, 1, 2}));
       }},
      {Op::broadcast_repeat, {Shape{3}}, {true}, [](const Inputs& x) { return broadcast_repeat(x[0], Shape{4, 3}); }},
      {Op::tile_sum, {Shape{4, 3}}, {true}, [](const Inputs& x) { return tile_sum(x[0], Shape{3}); }},
      {Op::slice, {Shape{7}}, {true}, [](const Inputs& x) { return slice(x[0], 2, 3); }},
      {Op::concat, {Shape{2}, Shape{3, 2}}, {true, true}, [](const Inputs& x) { return concat({x[0], x[1]}); }},
      {Op::reshape, {m}, {true}, [](const Inputs& x) { return reshape(x[0], Shape{2, 6}); }},
  };
}

/// Weighted sum of an op's output, so every output entry gets a distinct
/// cotangent.
inline Tensor<double> probe_loss(const OpCase& c, const Inputs& x, const Tensor<double>& weights) {
  return sum(hadamard(c.apply(x), weights));
}

inline SuiteResult check_op(const OpCase& c, std::uint64_t seed, const GradcheckOptions& opt) {
  SuiteResult r{"op:" + std::string(op_name(c.op)), 0, opt.op_tolerance, "", 0};
  for (std::size_t trial = 0; trial < opt.op_trials; ++trial) {
    auto rng = make_rng(seed, Stream::test, static_cast<std::uint64_t>(c.op) * 1000 + trial);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Inputs x;
    for (const auto& s : c.shapes) {
      std::vector<double> v(shape_size(s));
      for (auto& e : v) {
        e = u(rng);
        if (c.away_from_zero && std::abs(e) < 0.1) e += e < 0 ? -0.1 : 0.1;
      }
      x.emplace_back(s, std::move(v));
    }
    const auto out_shape = c.apply(x).shape();
    std::vector<double> w(shape_size(out_shape));
    for (auto& e : w) e = u(rng);
    const Tensor<double> weights(out_shape, std::move(w));

    Graph<double> graph;
    Inputs attached;
    std::vector<Tensor<double>> wrt;
    for (std::size_t i = 0; i < x.size(); ++i) {
      attached.push_back(c.differentiable[i] ? graph.variable(x[i]) : x[i]);
      if (c.differentiable[i]) wrt.push_back(attached.back());
    }
    auto grads = grad(probe_loss(c, attached, weights), std::span<const Tensor<double>>(wrt));

    std::size_t wi = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!c.differentiable[i]) continue;
      for (std::size_t k = 0; k < x[i].size(); ++k) {
        auto eval = [&](double delta) {
          Inputs p = x;
          auto v = p[i].to_vector();
          v[k] += delta;
          p[i] = Tensor<double>(p[i].shape(), std::move(v));
          return probe_loss(c, p, weights).item();
        };
        const double fd = (eval(opt.step) - eval(-opt.step)) / (2 * opt.step);
        const double e = relative_error(grads[wi][k], fd);
        ++r.checked;
        if (e >= r.max_error) {
          r.max_error = e;
          r.worst = "trial " + std::to_string(trial) + ", input " + std::to_string(i) + "[" + std::to_string(k) + "]";
        }
      }
      ++wi;
    }
  }
  return r;
}

inline TrainConfig gradcheck_config(const std::string& size, std::uint64_t seed, bool alfa_rule) {
  TrainConfig cfg;
  if (size == "tiny") {
    cfg.learner = LearnerSpec::regression({4});
    cfg.rule.steps = 2;
  } else if (size == "small") {
    cfg.learner = LearnerSpec::regression({8, 8});
    cfg.rule.steps = 3;
  } else {
    throw ConfigError("gradcheck: unknown size '" + size + "' (expected tiny or small)");
  }
  if (!alfa_rule) cfg.rule = UpdateRuleConfig::sgd(cfg.rule.steps, 0.01);
  cfg.tasks.query_size = 20;
  cfg.seed = seed;
  return cfg;
}

}  // namespace detail

/// Meta-gradient of one task's query loss with respect to every learnable
/// (generator, post-multipliers and the initialization) against central
/// differences of the full adapt-then-evaluate computation.
inline SuiteResult check_meta_gradient(const std::string& size, std::uint64_t seed, bool alfa_rule,
                                       const GradcheckOptions& opt) {
  SuiteResult r{alfa_rule ? "meta:alfa" : "meta:sgd", 0, opt.meta_tolerance, "", 0};
  const auto cfg = detail::gradcheck_config(size, seed, alfa_rule);
  auto model = init_model<double>(cfg);
  {
    // Zero biases can park ReLU inputs exactly on the kink; move to a generic
    // point so central differences are meaningful.
    auto rng = make_rng(seed, Stream::test, 1);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    auto ts = model.theta.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (!model.theta.name(i).ends_with(".bias")) continue;
      auto v = ts[i].to_vector();
      for (auto& e : v) e = u(rng);
      ts[i] = Tensor<double>(ts[i].shape(), std::move(v));
    }
    model.theta = model.theta.with_tensors(std::move(ts));
  }
  const auto task = sample_task<double>(cfg.tasks, seed, Stream::test, 0);
  const auto analytic = task_meta_gradient(cfg, model, task).grads;
  const auto flat = model.learnables(true);

  auto loss_at = [&](const ParamSet<double>& p) {
    auto m = model;
    m.assign(p, true);
    auto adapted = adapt(cfg.learner, m.theta, m.gen ? &*m.gen : nullptr, m.rule, task.support, cfg.rule);
    return eval_query(cfg.learner, adapted.params, task.query).loss.item();
  };
  for (std::size_t i = 0; i < flat.size(); ++i) {
    for (std::size_t k = 0; k < flat[i].size(); ++k) {
      auto perturbed = [&](double delta) {
        auto ts = flat.tensors();
        auto v = ts[i].to_vector();
        v[k] += delta;
        ts[i] = Tensor<double>(ts[i].shape(), std::move(v));
        return loss_at(flat.with_tensors(std::move(ts)));
      };
      // A ReLU boundary inside the stencil breaks central differences; it
      // cannot sit inside both a wide and a narrow stencil unless it is at
      // the point itself, so the better of the two is kept.
      const double fd = (perturbed(opt.step) - perturbed(-opt.step)) / (2 * opt.step);
      const double narrow = opt.step / 8;
      const double fd_narrow = (perturbed(narrow) - perturbed(-narrow)) / (2 * narrow);
      const double e = std::min(relative_error(analytic[i][k], fd), relative_error(analytic[i][k], fd_narrow));
      ++r.checked;
      if (e >= r.max_error) {
        r.max_error = e;
        r.worst = "seed " + std::to_string(seed) + ", " + flat.name(i) + "[" + std::to_string(k) + "]";
      }
    }
  }
  return r;
}

/// grad(grad(sum(x * x * x))) against 6x.
inline SuiteResult check_second_order(std::uint64_t seed) {
  SuiteResult r{"second_order", 0, 1e-10, "", 0};
  auto rng = make_rng(seed, Stream::test, 7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(6);
  for (auto& e : v) e = u(rng);
  Graph<double> graph;
  auto x = graph.variable(Tensor<double>(Shape{6}, v));
  auto f = sum(hadamard(hadamard(x, x), x));
  auto g = grad(f, {x}, {.retain_graph = true})[0];
  // Summing the first derivative leaves each entry's own second derivative.
  auto h = grad(sum(g), {x})[0];
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double e = std::abs(h[i] - 6 * v[i]);
    ++r.checked;
    if (e >= r.max_error) {
      r.max_error = e;
      r.worst = "x[" + std::to_string(i) + "]";
    }
  }
  return r;
}

/// Every suite; op suites first, then second order, then meta-gradients
/// pooled over `meta_seeds` seeds.
inline std::vector<SuiteResult> run_gradcheck(const GradcheckOptions& opt) {
  std::vector<SuiteResult> out;
  for (const auto& c : detail::op_cases()) out.push_back(detail::check_op(c, opt.seed, opt));
  out.push_back(check_second_order(opt.seed));
  for (bool alfa_rule : {false, true}) {
    SuiteResult pooled;
    for (std::size_t s = 0; s < opt.meta_seeds; ++s) {
      auto r = check_meta_gradient(opt.size, opt.seed + s, alfa_rule, opt);
      if (s == 0 || r.max_error > pooled.max_error) {
        const auto checked = pooled.checked;
        pooled = r;
        pooled.checked += checked;
      } else {
        pooled.checked += r.checked;
      }
    }
    out.push_back(pooled);
  }
  return out;
}

}  // namespace alfa
