#pragma once

// Outer loop: sample a meta-batch, adapt per task, sum query losses in task
// order and take one optimizer step on the meta-parameters.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "alfa/inner_loop.hpp"
#include "alfa/optim.hpp"
#include "alfa/tasks.hpp"

namespace alfa {

/// Which initialization the inner loop adapts from and whether it trains.
///  - random_frozen: sampled once, never updated
///  - random_jointly_trained: random start, updated with the meta-parameters
///  - maml_jointly_trained: updated as in MAML
enum class InitMode { random_frozen, random_jointly_trained, maml_jointly_trained };

inline constexpr double kInnerGradClamp = 1e4;

struct TrainConfig {
  InitMode init_mode = InitMode::maml_jointly_trained;
  std::size_t meta_batch = 4;
  OuterOptimizerConfig optimizer;
  std::size_t iterations = 15000;
  /// Periodic eval snapshot interval in iterations; 0 disables.
  std::size_t eval_every = 0;
  std::size_t eval_tasks = 100;
  /// Tasks in the final report written by the CLI.
  std::size_t report_tasks = 600;
  std::uint64_t seed = 0;
  /// Meta-eval seed; defaults to `seed`.
  std::optional<std::uint64_t> eval_seed;
  UpdateRuleConfig rule;
  GeneratorConfig generator;
  LearnerSpec learner = LearnerSpec::sinusoid_2x40();
  TaskConfig tasks;

  /// Regression presets. Both clip the summed meta-gradient at norm 10 and
  /// bound inner-loop gradients at 1e4, which keeps a rare runaway task finite
  /// instead of overflowing. The ALFA generator starts at the constant output 1
  /// (bias, zero output weights) so the first iterations behave like MAML, and
  /// it reads a standardized state.
  static TrainConfig sinusoid_maml(std::size_t k_shot = 5, LearnerSpec learner = LearnerSpec::sinusoid_2x40(),
                                   std::size_t steps = 5) {
    TrainConfig c;
    c.learner = std::move(learner);
    c.tasks.k_shot = k_shot;
    c.rule = UpdateRuleConfig::sgd(steps, 0.01);
    c.rule.grad_clamp = kInnerGradClamp;
    c.optimizer.clip_norm = 10.0;
    return c;
  }
  static TrainConfig sinusoid_alfa(std::size_t k_shot = 5, LearnerSpec learner = LearnerSpec::sinusoid_2x40(),
                                   std::size_t steps = 5) {
    TrainConfig c = sinusoid_maml(k_shot, std::move(learner), steps);
    c.rule = UpdateRuleConfig{};
    c.rule.steps = steps;
    c.rule.grad_clamp = kInnerGradClamp;
    c.rule.state_preprocess = StatePreprocess::standardize;
    c.generator.bias = true;
    c.generator.output_bias_init = 1.0;
    c.generator.output_weight_scale = 0.0;
    return c;
  }

  std::uint64_t resolved_eval_seed() const { return eval_seed.value_or(seed); }
  bool trains_theta() const { return init_mode != InitMode::random_frozen; }
  bool random_init() const { return init_mode != InitMode::maml_jointly_trained; }

  void validate() const {
    learner.validate();
    rule.validate();
    tasks.validate();
    if (meta_batch == 0) throw ConfigError("train: meta_batch must be positive");
    if (eval_tasks == 0 || report_tasks == 0) throw ConfigError("train: eval task counts must be positive");
    if (optimizer.learning_rate <= 0) throw ConfigError("train: learning rate must be positive");
    const bool blobs = tasks.family == "blobs";
    if (blobs != (learner.kind == LearnerKind::classification_mlp)) {
      throw ConfigError("train: task family '" + tasks.family + "' does not match the learner kind");
    }
    if (blobs && (learner.output_dim != tasks.blobs.n_way || learner.input_dim != tasks.blobs.input_dim)) {
      throw ConfigError("train: classification learner dims must match blobs n_way and input_dim");
    }
    if (!blobs && (learner.input_dim != 1 || learner.output_dim != 1)) {
      throw ConfigError("train: sinusoid regression needs input_dim = output_dim = 1");
    }
  }
};

/// Learner initialization plus every meta-learned quantity.
template <std::floating_point T>
struct MetaModel {
  ParamSet<T> theta;
  std::optional<HyperGenerator<T>> gen;
  ParamSet<T> rule;

  /// Parameters the outer loop updates, prefixed "theta.", "gen.", "rule.".
  ParamSet<T> learnables(bool include_theta) const {
    ParamSet<T> out;
    if (include_theta) out.append(theta, "theta.");
    if (gen) out.append(gen->params(), "gen.");
    out.append(rule, "rule.");
    return out;
  }

  /// Everything, frozen or not, in checkpoint order.
  ParamSet<T> all() const { return learnables(true); }

  void assign(const ParamSet<T>& flat, bool include_theta) {
    std::size_t at = 0;
    auto take = [&](const ParamSet<T>& like) {
      std::vector<Tensor<T>> v;
      for (std::size_t i = 0; i < like.size(); ++i) v.push_back(flat[at++]);
      return like.with_tensors(std::move(v));
    };
    if (flat.size() != learnables(include_theta).size()) {
      throw ShapeError("meta model: " + std::to_string(flat.size()) + " tensors for " +
                       std::to_string(learnables(include_theta).size()) + " parameters");
    }
    if (include_theta) theta = take(theta);
    if (gen) gen->params() = take(gen->params());
    rule = take(rule);
  }
};

template <std::floating_point T>
MetaModel<T> init_model(const TrainConfig& cfg) {
  cfg.validate();
  MetaModel<T> model;
  model.theta = init_params<T>(cfg.learner, cfg.seed);
  const auto map = unit_map(cfg.learner);
  GeneratorConfig gen_cfg = cfg.generator;
  gen_cfg.per_param_decay = cfg.random_init() && cfg.rule.rule == UpdateRule::alfa;
  if (cfg.rule.uses_generator()) {
    model.gen = init_generator<T>(map.units(), cfg.rule.steps, cfg.seed, gen_cfg, &model.theta);
  }
  model.rule = init_rule_params<T>(cfg.rule, gen_cfg, map.units());
  return model;
}

struct TrainRecord {
  std::size_t iteration = 0;
  double support_loss = 0;  // mean over the meta-batch, after adaptation
  double query_loss = 0;    // mean over the meta-batch
  double wall_seconds = 0;  // since the start of this process's training

  /// Equality on the deterministic fields (wall time excluded).
  bool same_values(const TrainRecord& o) const {
    return iteration == o.iteration && support_loss == o.support_loss && query_loss == o.query_loss;
  }
};

struct EvalSnapshot {
  std::size_t iteration = 0;
  double mean = 0;
  double ci95 = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::vector<EvalSnapshot> evals;

  bool same_values(const TrainLog& o) const {
    if (records.size() != o.records.size() || evals.size() != o.evals.size()) return false;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (!records[i].same_values(o.records[i])) return false;
    for (std::size_t i = 0; i < evals.size(); ++i) {
      if (evals[i].iteration != o.evals[i].iteration || evals[i].mean != o.evals[i].mean ||
          evals[i].ci95 != o.evals[i].ci95) {
        return false;
      }
    }
    return true;
  }
};

struct SeedReport {
  std::uint64_t seed = 0;
  double mean = 0;
  double ci95 = 0;
  std::size_t task_count = 0;
};

struct EvalReport {
  double mean = 0;
  double ci95 = 0;  // 1.96 * standard error over task losses
  std::optional<double> accuracy;
  std::size_t task_count = 0;
  /// Set when the interval is undefined (a single task); ci95 is then 0.
  bool degenerate_ci = false;
  std::vector<SeedReport> per_seed;
  std::vector<double> task_losses;
};

/// Mean and 95% half-width of a sample.
inline std::pair<double, double> mean_ci95(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  double mu = 0;
  for (double x : xs) mu += x;
  mu /= n;
  if (xs.size() < 2) return {mu, 0.0};
  double ss = 0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return {mu, 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n)};
}

/// Pools reports of several seeds; the interval is recomputed over all tasks.
inline EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  EvalReport out;
  double acc = 0;
  bool has_acc = false;
  for (const auto& r : reports) {
    out.task_losses.insert(out.task_losses.end(), r.task_losses.begin(), r.task_losses.end());
    out.per_seed.insert(out.per_seed.end(), r.per_seed.begin(), r.per_seed.end());
    if (r.accuracy) {
      has_acc = true;
      acc += *r.accuracy * static_cast<double>(r.task_count);
    }
  }
  out.task_count = out.task_losses.size();
  if (out.task_count == 0) return out;
  std::tie(out.mean, out.ci95) = mean_ci95(out.task_losses);
  out.degenerate_ci = out.task_count < 2;
  if (has_acc) out.accuracy = acc / static_cast<double>(out.task_count);
  return out;
}

/// Worker cap from ALFA_THREADS (default 1).
inline std::size_t worker_count() {
  if (const char* env = std::getenv("ALFA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Evaluates `count` jobs on up to `workers` threads; results keep job order.
template <class R>
std::vector<R> run_ordered(std::size_t count, std::size_t workers, const std::function<R(std::size_t)>& job) {
  std::vector<R> out;
  out.reserve(count);
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(job(i));
    return out;
  }
  for (std::size_t start = 0; start < count; start += workers) {
    std::vector<std::future<R>> pending;
    for (std::size_t i = start; i < std::min(count, start + workers); ++i) {
      pending.push_back(std::async(std::launch::async, job, i));
    }
    for (auto& f : pending) out.push_back(f.get());
  }
  return out;
}

template <std::floating_point T>
struct TaskOutcome {
  std::vector<Tensor<T>> grads;  // aligned with MetaModel::learnables
  double support_loss = 0;
  double query_loss = 0;
};

/// Query loss of one task and its gradient with respect to the learnable
/// meta-parameters.
template <std::floating_point T>
TaskOutcome<T> task_meta_gradient(const TrainConfig& cfg, const MetaModel<T>& model, const Task<T>& task) {
  Graph<T> graph;
  const auto map = unit_map(cfg.learner);
  const bool with_theta = cfg.trains_theta();
  auto theta = model.theta.attach(graph);
  std::optional<HyperGenerator<T>> gen;
  if (model.gen) gen = model.gen->attach(graph);
  auto rule = model.rule.attach(graph);

  auto adapted = adapt(graph, cfg.learner, theta, gen ? &*gen : nullptr, rule, task.support, cfg.rule, map);
  auto query = eval_query(cfg.learner, adapted.params, task.query);
  const double q = static_cast<double>(query.loss.item());
  if (!std::isfinite(q)) throw NonFiniteError("meta-train: non-finite query loss");

  std::vector<Tensor<T>> wrt;
  if (with_theta) for (const auto& t : theta.tensors()) wrt.push_back(t);
  if (gen) for (const auto& t : gen->params().tensors()) wrt.push_back(t);
  for (const auto& t : rule.tensors()) wrt.push_back(t);

  TaskOutcome<T> out;
  out.grads = grad(query.loss, std::span<const Tensor<T>>(wrt), {.retain_graph = false, .allow_unused = true});
  out.query_loss = q;
  out.support_loss = static_cast<double>(task_loss(cfg.learner, adapted.params.detach(), task.support).item());
  return out;
}

/// Adapts to `n_tasks` fresh tasks of the meta-eval stream and reports the
/// query loss. Traces of every task are appended to `traces` when given.
template <std::floating_point T>
EvalReport meta_eval(const MetaModel<T>& model, const TrainConfig& cfg, std::size_t n_tasks,
                     std::vector<AdaptationTrace>* traces = nullptr) {
  if (n_tasks == 0) throw ConfigError("meta_eval: n_tasks must be at least 1");
  UpdateRuleConfig rule_cfg = cfg.rule;
  rule_cfg.first_order = true;  // forward values are unaffected
  const auto seed = cfg.resolved_eval_seed();
  struct One {
    double loss;
    std::optional<double> accuracy;
    AdaptationTrace trace;
  };
  auto results = run_ordered<One>(n_tasks, worker_count(), [&](std::size_t t) {
    auto task = sample_task<T>(cfg.tasks, seed, Stream::meta_eval, t);
    auto adapted = adapt(cfg.learner, model.theta, model.gen ? &*model.gen : nullptr, model.rule, task.support, rule_cfg);
    auto q = eval_query(cfg.learner, adapted.params, task.query);
    return One{static_cast<double>(q.loss.item()), q.accuracy, std::move(adapted.trace)};
  });
  EvalReport report;
  double acc = 0;
  for (auto& r : results) {
    report.task_losses.push_back(r.loss);
    if (r.accuracy) acc += *r.accuracy;
    if (traces) traces->push_back(std::move(r.trace));
  }
  report.task_count = n_tasks;
  std::tie(report.mean, report.ci95) = mean_ci95(report.task_losses);
  report.degenerate_ci = n_tasks < 2;
  if (cfg.learner.kind == LearnerKind::classification_mlp) report.accuracy = acc / static_cast<double>(n_tasks);
  report.per_seed.push_back({seed, report.mean, report.ci95, n_tasks});
  return report;
}

/// Serializable trainer state; everything needed to continue bitwise.
template <std::floating_point T>
struct TrainerState {
  std::size_t iteration = 0;
  /// Next task index of the meta-train stream.
  std::uint64_t train_cursor = 0;
  ParamSet<T> model;  // MetaModel::all()
  std::size_t optimizer_steps = 0;
  ParamSet<T> first_moment;
  ParamSet<T> second_moment;
  TrainLog log;
};

template <std::floating_point T>
class MetaTrainer {
 public:
  explicit MetaTrainer(TrainConfig cfg) : cfg_(std::move(cfg)), model_(init_model<T>(cfg_)) {
    optimizer_ = OuterOptimizer<T>(cfg_.optimizer, model_.learnables(cfg_.trains_theta()));
  }

  MetaTrainer(TrainConfig cfg, const TrainerState<T>& state) : MetaTrainer(std::move(cfg)) {
    auto all = model_.all();
    model_.assign(all.with_tensors(state.model.tensors()), true);
    optimizer_.restore(state.optimizer_steps, state.first_moment, state.second_moment);
    iteration_ = state.iteration;
    cursor_ = state.train_cursor;
    log_ = state.log;
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  const MetaModel<T>& model() const noexcept { return model_; }
  const TrainLog& log() const noexcept { return log_; }
  std::size_t iteration() const noexcept { return iteration_; }

  /// Runs outer iterations until `until` (exclusive upper bound on the
  /// iteration counter). `on_iteration` fires after each completed one.
  void train(std::size_t until, const std::function<void(const MetaTrainer&)>& on_iteration = {}) {
    const auto start = std::chrono::steady_clock::now();
    const bool with_theta = cfg_.trains_theta();
    const std::size_t workers = worker_count();
    while (iteration_ < until) {
      const std::uint64_t first = cursor_;
      auto outcomes = run_ordered<TaskOutcome<T>>(cfg_.meta_batch, workers, [&](std::size_t t) {
        auto task = sample_task<T>(cfg_.tasks, cfg_.seed, Stream::meta_train, first + t);
        try {
          return task_meta_gradient(cfg_, model_, task);
        } catch (const NonFiniteError& e) {
          throw NonFiniteError("iteration " + std::to_string(iteration_) + ", task " + std::to_string(t) +
                                   ": " + e.what(),
                               e.step());
        }
      });
      cursor_ += cfg_.meta_batch;

      // Sum in task order.
      std::vector<Tensor<T>> total = outcomes[0].grads;
      TrainRecord rec;
      rec.iteration = iteration_;
      for (std::size_t t = 0; t < outcomes.size(); ++t) {
        if (t > 0) {
          for (std::size_t i = 0; i < total.size(); ++i) total[i] = add(total[i], outcomes[t].grads[i]);
        }
        rec.support_loss += outcomes[t].support_loss;
        rec.query_loss += outcomes[t].query_loss;
      }
      rec.support_loss /= static_cast<double>(outcomes.size());
      rec.query_loss /= static_cast<double>(outcomes.size());

      auto params = model_.learnables(with_theta);
      model_.assign(optimizer_.step(params, total), with_theta);
      ++iteration_;
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log_.records.push_back(rec);

      if (cfg_.eval_every && iteration_ % cfg_.eval_every == 0) {
        auto r = meta_eval(model_, cfg_, cfg_.eval_tasks);
        log_.evals.push_back({iteration_, r.mean, r.ci95});
      }
      if (on_iteration) on_iteration(*this);
    }
  }

  void train() { train(cfg_.iterations); }

  TrainerState<T> state() const {
    TrainerState<T> s;
    s.iteration = iteration_;
    s.train_cursor = cursor_;
    s.model = model_.all();
    s.optimizer_steps = optimizer_.steps();
    s.first_moment = optimizer_.first_moment();
    s.second_moment = optimizer_.second_moment();
    s.log = log_;
    return s;
  }

 private:
  TrainConfig cfg_;
  MetaModel<T> model_;
  OuterOptimizer<T> optimizer_;
  std::size_t iteration_ = 0;
  std::uint64_t cursor_ = 0;
  TrainLog log_;
};

template <std::floating_point T>
struct TrainResult {
  MetaModel<T> model;
  TrainLog log;
};

template <std::floating_point T>
TrainResult<T> meta_train(const TrainConfig& cfg) {
  MetaTrainer<T> trainer(cfg);
  trainer.train();
  return {trainer.model(), trainer.log()};
}

}  // namespace alfa
