// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is nonzero when any criterion fails.
//
//   acceptance            all criteria
//   acceptance 1 2 10     a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "alfa/checkpoint.hpp"
#include "alfa/report.hpp"

using namespace alfa;
using T64 = Tensor<double>;

namespace {

const std::vector<std::uint64_t> kSeeds{0, 1, 2};
constexpr std::size_t kEvalTasks = 600;

bool g_all_ok = true;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("C%-2d %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  g_all_ok = g_all_ok && ok;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

// ---------------------------------------------------------------------------
// Trained-run cache shared by the quantitative criteria.

struct RunKey {
  std::string variant;  // maml | alfa | weight | gradient
  std::size_t k, steps, seed;
  bool wide;  // 3x80 learner
  auto operator<=>(const RunKey&) const = default;
};

struct RunResult {
  MetaModel<double> model;
  TrainConfig cfg;
  EvalReport report;
};

std::map<RunKey, RunResult> g_runs;

const RunResult& trained(const RunKey& key) {
  if (auto it = g_runs.find(key); it != g_runs.end()) return it->second;
  const auto learner = key.wide ? LearnerSpec::sinusoid_3x80() : LearnerSpec::sinusoid_2x40();
  auto cfg = key.variant == "maml" ? TrainConfig::sinusoid_maml(key.k, learner, key.steps)
                                   : TrainConfig::sinusoid_alfa(key.k, learner, key.steps);
  if (key.variant == "weight") cfg.rule.state_mode = StateMode::weight_only;
  if (key.variant == "gradient") cfg.rule.state_mode = StateMode::gradient_only;
  cfg.seed = key.seed;
  const auto start = std::chrono::steady_clock::now();
  auto model = meta_train<double>(cfg).model;
  auto report = meta_eval(model, cfg, kEvalTasks);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "  [%s k=%zu S=%zu %s seed %zu] %.4f +- %.4f (%.0fs)\n", key.variant.c_str(), key.k,
               key.steps, key.wide ? "3x80" : "2x40", key.seed, report.mean, report.ci95, secs);
  return g_runs.emplace(key, RunResult{std::move(model), cfg, std::move(report)}).first->second;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

/// Analytic meta-gradient against central differences of the forward-only
/// adapt-then-evaluate computation.
void criterion1() {
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TrainConfig cfg;
    cfg.learner = LearnerSpec::regression({4});
    cfg.rule.steps = 2;
    cfg.tasks.query_size = 20;
    cfg.seed = seed;
    auto model = init_model<double>(cfg);
    // Generic point: small random biases keep ReLU inputs off the kink.
    auto rng = make_rng(seed, Stream::test, 1);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    auto ts = model.theta.tensors();
    for (std::size_t i = 1; i < ts.size(); i += 2) {
      std::vector<double> v(ts[i].size());
      for (auto& e : v) e = u(rng);
      ts[i] = T64(ts[i].shape(), v);
    }
    model.theta = model.theta.with_tensors(ts);
    const auto task = sample_task<double>(cfg.tasks, seed, Stream::test, 0);
    const auto analytic = task_meta_gradient(cfg, model, task).grads;
    const auto flat = model.learnables(true);

    auto loss_with = [&](std::size_t i, std::size_t k, double delta) {
      auto t = flat.tensors();
      auto v = t[i].to_vector();
      v[k] += delta;
      t[i] = T64(t[i].shape(), v);
      auto m = model;
      m.assign(flat.with_tensors(t), true);
      auto adapted = adapt(cfg.learner, m.theta, &*m.gen, m.rule, task.support, cfg.rule);
      return eval_query(cfg.learner, adapted.params, task.query).loss.item();
    };
    for (std::size_t i = 0; i < flat.size(); ++i) {
      for (std::size_t k = 0; k < flat[i].size(); ++k) {
        // Best of a wide and a narrow stencil: a kink can spoil one, not both.
        double e = INFINITY;
        for (double h : {1e-6, 1.25e-7}) {
          const double fd = (loss_with(i, k, h) - loss_with(i, k, -h)) / (2 * h);
          e = std::min(e, rel_err(analytic[i][k], fd));
        }
        ++checked;
        if (e > worst) {
          worst = e;
          where = fmt("seed %llu %s[%zu]", static_cast<unsigned long long>(seed), flat.name(i).c_str(), k);
        }
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  verdict(1, worst <= 1e-4 && secs < 60,
          fmt("meta-gradient vs central differences, 1-4-1 net, S=2, 20 seeds: max rel err %.2e (tol 1e-4, %zu entries, "
              "worst %s), %.1fs",
              worst, checked, where.c_str(), secs));
}

void criterion2() {
  const auto spec = LearnerSpec::sinusoid_2x40();
  bool ok = true;
  std::size_t trials = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto theta = init_params<double>(spec, seed);
    const auto task = sample_sinusoid<double>(SinusoidFamily{}, 10, 10, seed, Stream::test, 0);
    UpdateRuleConfig rule;  // full adaptive rule
    rule.steps = 5;
    GeneratorConfig g;
    g.alpha0_init = 0.01;
    g.beta0_init = 1.0;
    auto gen = init_generator<double>(6, 5, seed, g);
    gen.set_output_override(std::vector<double>(12, 1.0));
    const auto alfa = adapt<double>(spec, theta, &gen, {}, task.support, rule);
    const auto sgd = adapt<double>(spec, theta, nullptr, {}, task.support, UpdateRuleConfig::sgd(5, 0.01));
    ok = ok && identical(alfa.params, sgd.params);
    for (std::size_t j = 0; j < 5; ++j) ok = ok && alfa.trace.steps[j].support_loss == sgd.trace.steps[j].support_loss;
    ++trials;
  }
  verdict(2, ok, fmt("unit generator output, alpha0 = 0.01, beta0 = 1 vs SGD at 0.01 over 5 steps: %s in %zu trials",
                     ok ? "bitwise identical" : "MISMATCH", trials));
}

void criterion3() {
  const auto spec = LearnerSpec::sinusoid_2x40();
  double worst = 0;
  const double a = 0.01;
  for (double lambda : {1e-4, 1e-2}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto theta = init_params<double>(spec, seed);
      const auto task = sample_sinusoid<double>(SinusoidFamily{}, 5, 5, seed, Stream::test, 1);
      UpdateRuleConfig rule;
      rule.steps = 1;
      rule.alpha_mode = HyperMode::constant;
      rule.beta_mode = HyperMode::constant;
      rule.constant_alpha = a;
      rule.constant_beta = 1 - a * lambda;
      const auto decayed = adapt<double>(spec, theta, nullptr, {}, task.support, rule).params;
      // Regularized SGD by hand: theta - a * (grad L + lambda * theta).
      Graph<double> g;
      auto attached = theta.attach(g);
      auto grads = grad(task_loss(spec, attached, task.support), std::span<const T64>(attached.tensors()));
      for (std::size_t i = 0; i < theta.size(); ++i)
        for (std::size_t k = 0; k < theta[i].size(); ++k)
          worst = std::max(worst, std::abs(decayed[i][k] - (theta[i][k] - a * (grads[i][k] + lambda * theta[i][k]))));
    }
  }
  verdict(3, worst <= 1e-10,
          fmt("decay step vs SGD on L + (lambda/2)|theta|^2, lambda in {1e-4, 1e-2}: max abs diff %.2e (tol 1e-10)", worst));
}

void criterion4() {
  bool ok = true;
  std::string detail;
  for (auto [n, s] : {std::pair<std::size_t, std::size_t>{4, 5}, {6, 5}, {8, 3}}) {
    const auto count = init_generator<double>(n, s, 0, {}).trainable_count();
    const auto want = 2 * s * n + 12 * n * n;
    ok = ok && count == want;
    detail += fmt("(N=%zu,S=%zu) %zu/%zu  ", n, s, count, want);
  }
  verdict(4, ok, "generator parameter count vs 2SN + 12N^2: " + detail);
}

void criterion5() {
  bool hard = true;
  std::vector<double> maml, alfa;
  std::string detail;
  for (auto seed : kSeeds) {
    const auto& m = trained({"maml", 5, 5, seed, false}).report;
    const auto& a = trained({"alfa", 5, 5, seed, false}).report;
    hard = hard && a.mean < m.mean;
    maml.push_back(m.mean);
    alfa.push_back(a.mean);
    detail += fmt("seed %zu: MAML %.3f ALFA %.3f; ", static_cast<std::size_t>(seed), m.mean, a.mean);
  }
  const double mm = mean_of(maml), am = mean_of(alfa);
  const bool soft = std::abs(mm - 1.24) <= 0.5 && std::abs(am - 0.92) <= 0.5;
  verdict(5, hard && soft,
          fmt("5-shot, 2x40: %shard %s (ALFA < MAML every seed); soft %s (MAML %.3f vs 1.24 +- 0.5, ALFA %.3f vs 0.92 "
              "+- 0.5)",
              detail.c_str(), hard ? "ok" : "FAILED", soft ? "ok" : "FAILED", mm, am));
}

void criterion6() {
  bool ok = true;
  std::string detail;
  struct Cell {
    const char* name;
    std::size_t k;
    bool wide;
  };
  for (const Cell c : {Cell{"10-shot 2x40", 10, false}, Cell{"20-shot 2x40", 20, false}, Cell{"5-shot 3x80", 5, true}}) {
    detail += std::string(c.name) + ":";
    for (auto seed : kSeeds) {
      const double m = trained({"maml", c.k, 5, seed, c.wide}).report.mean;
      const double a = trained({"alfa", c.k, 5, seed, c.wide}).report.mean;
      ok = ok && a < m;
      detail += fmt(" %.3f/%.3f", a, m);
    }
    detail += "; ";
  }
  verdict(6, ok, "ALFA/MAML per seed, ALFA lower everywhere: " + detail);
}

void criterion7() {
  bool ok = true;
  std::string detail;
  for (std::size_t s = 1; s <= 5; ++s) {
    detail += fmt("S=%zu:", s);
    for (auto seed : kSeeds) {
      const double m = trained({"maml", 5, 5, seed, false}).report.mean;
      const double a = trained({"alfa", 5, s, seed, false}).report.mean;
      ok = ok && a < m;
      detail += fmt(" %.3f%s", a, a < m ? "" : "!");
    }
    detail += "; ";
  }
  std::string base = "MAML(5):";
  for (auto seed : kSeeds) base += fmt(" %.3f", trained({"maml", 5, 5, seed, false}).report.mean);
  verdict(7, ok, "ALFA with S steps vs 5-step MAML per seed (! marks a loss): " + detail + base);
}

void criterion8() {
  std::vector<EvalReport> w, g, both, maml;
  for (auto seed : kSeeds) {
    maml.push_back(trained({"maml", 5, 5, seed, false}).report);
    w.push_back(trained({"weight", 5, 5, seed, false}).report);
    g.push_back(trained({"gradient", 5, 5, seed, false}).report);
    both.push_back(trained({"alfa", 5, 5, seed, false}).report);
  }
  const auto pw = merge_reports(w), pg = merge_reports(g), pb = merge_reports(both), pm = merge_reports(maml);
  const auto& better = pw.mean <= pg.mean ? pw : pg;
  const bool beat = pw.mean < pm.mean && pg.mean < pm.mean;
  const bool combined = pb.mean <= better.mean + better.ci95;
  verdict(8, beat && combined,
          fmt("pooled over %zu seeds: MAML %.3f, weight %.3f +- %.3f, gradient %.3f +- %.3f, both %.3f; singles beat "
              "MAML %s; both within one half-width of the better single %s",
              kSeeds.size(), pm.mean, pw.mean, pw.ci95, pg.mean, pg.ci95, pb.mean, beat ? "ok" : "FAILED",
              combined ? "ok" : "FAILED"));
}

void criterion9() {
  const auto& run = trained({"alfa", 5, 5, 0, false});
  std::vector<AdaptationTrace> traces;
  meta_eval(run.model, run.cfg, 100, &traces);
  const std::size_t units = traces[0].steps[0].alpha.size(), steps = traces[0].steps.size();
  auto sd = [](const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size()));
  };
  // Per unit: mean over tasks of the spread across steps, and mean over steps
  // of the spread across tasks.
  auto spreads = [&](bool alpha, std::size_t k) {
    auto pick = [&](std::size_t t, std::size_t j) {
      return alpha ? traces[t].steps[j].alpha[k] : traces[t].steps[j].beta[k];
    };
    std::vector<double> over_steps, over_tasks;
    for (std::size_t t = 0; t < traces.size(); ++t) {
      std::vector<double> v;
      for (std::size_t j = 0; j < steps; ++j) v.push_back(pick(t, j));
      over_steps.push_back(sd(v));
    }
    for (std::size_t j = 0; j < steps; ++j) {
      std::vector<double> v;
      for (std::size_t t = 0; t < traces.size(); ++t) v.push_back(pick(t, j));
      over_tasks.push_back(sd(v));
    }
    return std::pair{mean_of(over_steps), mean_of(over_tasks)};
  };
  int alpha_units = 0, beta_units = 0;
  double best_a_steps = 0, best_a_tasks = 0, best_b_steps = 0, best_b_tasks = 0;
  for (std::size_t k = 0; k < units; ++k) {
    auto [as, at] = spreads(true, k);
    auto [bs, bt] = spreads(false, k);
    alpha_units += as > 1e-6 && at > 1e-8;
    beta_units += bs > 1e-6 && bt > 1e-8;
    best_a_steps = std::max(best_a_steps, as);
    best_a_tasks = std::max(best_a_tasks, at);
    best_b_steps = std::max(best_b_steps, bs);
    best_b_tasks = std::max(best_b_tasks, bt);
  }
  verdict(9, alpha_units > 0 && beta_units > 0,
          fmt("100 eval tasks, 5 steps, %zu units: units dynamic in alpha %d, in beta %d; largest sd across steps "
              "alpha %.2e beta %.2e, across tasks alpha %.2e beta %.2e",
              units, alpha_units, beta_units, best_a_steps, best_b_steps, best_a_tasks, best_b_tasks));
}

void criterion10() {
  auto cfg = TrainConfig::sinusoid_alfa();
  cfg.iterations = 60;
  cfg.eval_every = 20;
  cfg.eval_tasks = 20;
  cfg.seed = 5;
  const auto a = meta_train<double>(cfg);
  const auto b = meta_train<double>(cfg);
  const bool same_log = a.log.same_values(b.log) && identical(a.model.all(), b.model.all());
  const auto ra = meta_eval(a.model, cfg, 50), rb = meta_eval(b.model, cfg, 50);
  const bool same_report = report_to_json(ra).dump() == report_to_json(rb).dump();

  RunConfig rc{cfg, {}};
  const auto path = (std::filesystem::temp_directory_path() / ("alfa_accept_" + std::to_string(::getpid()) + ".ckpt"))
                        .string();
  MetaTrainer<double> first(cfg);
  first.train(30);
  save_checkpoint(path, rc, first.state());
  auto resumed = resume_trainer(cfg, load_checkpoint<double>(path));
  std::filesystem::remove(path);
  resumed.train();
  const auto s = resumed.state();
  const bool same_resume = resumed.log().same_values(a.log) && identical(s.model, a.model.all()) &&
                           report_to_json(meta_eval(resumed.model(), cfg, 50)).dump() == report_to_json(ra).dump();
  verdict(10, same_log && same_report && same_resume,
          fmt("two identical 60-iteration runs: log %s, report %s; resume at 30 from a checkpoint file: %s",
              same_log ? "bitwise equal" : "DIFFERS", same_report ? "bitwise equal" : "DIFFERS",
              same_resume ? "bitwise equal" : "DIFFERS"));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  void (*const criteria[])() = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                criterion6, criterion7, criterion8, criterion9, criterion10};
  for (int id = 1; id <= 10; ++id) {
    if (!only.empty() && !only.count(id)) continue;
    try {
      criteria[id - 1]();
    } catch (const std::exception& e) {
      verdict(id, false, std::string("error: ") + e.what());
    }
  }
  return g_all_ok ? 0 : 1;
}
