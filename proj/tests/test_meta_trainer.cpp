#include <gtest/gtest.h>

#include <cstdlib>

#include "alfa/meta_trainer.hpp"
#include "oracles.hpp"

using namespace alfa;
using T64 = Tensor<double>;

namespace {

TrainConfig small_config(bool alfa_rule) {
  auto c = alfa_rule ? TrainConfig::sinusoid_alfa(5, LearnerSpec::regression({8, 8}), 2)
                     : TrainConfig::sinusoid_maml(5, LearnerSpec::regression({8, 8}), 2);
  c.meta_batch = 2;
  c.iterations = 3;
  c.tasks.query_size = 10;
  c.eval_tasks = 5;
  return c;
}

}  // namespace

TEST(MetaTrain, ZeroIterationsIsNoOp) {
  auto cfg = small_config(true);
  cfg.iterations = 0;
  auto r = meta_train<double>(cfg);
  EXPECT_TRUE(r.log.records.empty());
  EXPECT_TRUE(identical(r.model.all(), init_model<double>(cfg).all()));
}

TEST(MetaTrain, FrozenAdaptationGivesPlainQueryStep) {
  auto cfg = small_config(true);
  cfg.iterations = 1;
  cfg.meta_batch = 1;
  cfg.generator.alpha0_init = 0.0;
  cfg.generator.beta0_init = 1.0;
  cfg.rule.first_order = true;
  cfg.optimizer.kind = OuterOptimizerConfig::Kind::sgd;
  cfg.optimizer.clip_norm = 0.0;
  cfg.optimizer.learning_rate = 0.05;
  const auto theta0 = init_model<double>(cfg).theta;
  const auto task = sample_task<double>(cfg.tasks, cfg.seed, Stream::meta_train, 0);

  // Inner loop is frozen, so the update is one SGD step on the query loss at theta0.
  Graph<double> g;
  auto attached = theta0.attach(g);
  auto grads = grad(task_loss(cfg.learner, attached, task.query), std::span<const T64>(attached.tensors()));

  auto r = meta_train<double>(cfg);
  for (std::size_t i = 0; i < theta0.size(); ++i)
    for (std::size_t k = 0; k < theta0[i].size(); ++k)
      EXPECT_NEAR(r.model.theta[i][k], theta0[i][k] - 0.05 * grads[i][k], 1e-15);
  EXPECT_EQ(r.log.records.size(), 1u);
}

TEST(MetaTrain, TrainerGradientEqualsManualGradient) {
  auto cfg = small_config(true);
  cfg.rule.steps = 1;
  const auto model = init_model<double>(cfg);
  const auto task = sample_task<double>(cfg.tasks, 0, Stream::meta_train, 0);
  const auto out = task_meta_gradient(cfg, model, task);

  Graph<double> g;
  auto theta = model.theta.attach(g);
  auto gen = model.gen->attach(g);
  auto rule = model.rule.attach(g);
  auto adapted = adapt(g, cfg.learner, theta, &gen, rule, task.support, cfg.rule);
  auto q = eval_query(cfg.learner, adapted.params, task.query).loss;
  std::vector<T64> wrt = theta.tensors();
  for (const auto& t : gen.params().tensors()) wrt.push_back(t);
  auto manual = grad(q, std::span<const T64>(wrt), {.allow_unused = true});
  ASSERT_EQ(manual.size(), out.grads.size());
  for (std::size_t i = 0; i < manual.size(); ++i) EXPECT_TRUE(identical(manual[i], out.grads[i])) << i;
  EXPECT_EQ(out.query_loss, q.item());
}

TEST(MetaTrain, SameSeedSameLogBitwise) {
  auto cfg = small_config(true);
  cfg.eval_every = 1;
  auto a = meta_train<double>(cfg);
  auto b = meta_train<double>(cfg);
  EXPECT_TRUE(a.log.same_values(b.log));
  EXPECT_EQ(a.log.evals.size(), 3u);
  EXPECT_TRUE(identical(a.model.all(), b.model.all()));
  cfg.seed = 1;
  EXPECT_FALSE(a.log.same_values(meta_train<double>(cfg).log));
}

TEST(MetaTrain, ThreadedRunMatchesSequential) {
  auto cfg = small_config(true);
  cfg.meta_batch = 4;
  auto seq = meta_train<double>(cfg);
  ::setenv("ALFA_THREADS", "3", 1);
  auto par = meta_train<double>(cfg);
  auto par_eval = meta_eval(par.model, cfg, 7);
  ::unsetenv("ALFA_THREADS");
  EXPECT_TRUE(seq.log.same_values(par.log));
  EXPECT_TRUE(identical(seq.model.all(), par.model.all()));
  EXPECT_EQ(meta_eval(seq.model, cfg, 7).task_losses, par_eval.task_losses);
}

TEST(MetaTrain, ResumeMatchesUninterrupted) {
  auto cfg = small_config(true);
  cfg.iterations = 4;
  MetaTrainer<double> full(cfg);
  full.train();
  MetaTrainer<double> first(cfg);
  first.train(2);
  MetaTrainer<double> second(cfg, first.state());
  second.train();
  EXPECT_TRUE(full.log().same_values(second.log()));
  EXPECT_TRUE(identical(full.model().all(), second.model().all()));
}

TEST(MetaTrain, RandomFrozenNeverUpdatesTheta) {
  auto cfg = small_config(true);
  cfg.init_mode = InitMode::random_frozen;
  const auto before = init_model<double>(cfg);
  auto r = meta_train<double>(cfg);
  EXPECT_TRUE(identical(r.model.theta, before.theta));
  EXPECT_FALSE(identical(r.model.gen->params(), before.gen->params()));
  // Random-init ALFA carries the per-parameter decay term.
  EXPECT_NE(r.model.gen->decay(weight_name(0)), nullptr);
}

TEST(MetaTrain, SgdRuleIsPlainMaml) {
  auto cfg = small_config(false);
  auto model = init_model<double>(cfg);
  EXPECT_FALSE(model.gen.has_value());
  EXPECT_EQ(model.rule.size(), 0u);
  auto r = meta_train<double>(cfg);
  EXPECT_FALSE(identical(r.model.theta, model.theta));
}

TEST(MetaEval, SingleTaskHasDegenerateInterval) {
  auto cfg = small_config(false);
  auto r = meta_eval(init_model<double>(cfg), cfg, 1);
  EXPECT_EQ(r.task_count, 1u);
  EXPECT_EQ(r.ci95, 0.0);
  EXPECT_TRUE(r.degenerate_ci);
  EXPECT_THROW(meta_eval(init_model<double>(cfg), cfg, 0), ConfigError);
}

TEST(MetaEval, FittingLearnerScoresZero) {
  // Flat targets and a zero network: nothing to adapt, nothing to miss.
  auto cfg = small_config(true);
  cfg.tasks.sinusoid.amplitude_min = cfg.tasks.sinusoid.amplitude_max = 0.0;
  auto model = init_model<double>(cfg);
  std::vector<T64> zeros;
  for (const auto& t : model.theta.tensors()) zeros.push_back(T64::zeros(t.shape()));
  model.theta = model.theta.with_tensors(zeros);
  auto r = meta_eval(model, cfg, 20);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.task_count, 20u);
}

TEST(MetaEval, IntervalIsNormalApproximation) {
  const std::vector<double> xs{1.0, 2.0, 4.0, 7.0};
  auto [mu, ci] = mean_ci95(xs);
  const double m = oracle::mean(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  EXPECT_DOUBLE_EQ(mu, 3.5);
  EXPECT_NEAR(ci, 1.96 * std::sqrt(ss / 3.0) / 2.0, 1e-15);
}

TEST(MetaEval, TrainingImprovesOnUntrained) {
  auto cfg = TrainConfig::sinusoid_maml();
  cfg.iterations = 400;
  const auto untrained = meta_eval(init_model<double>(cfg), cfg, 100);
  const auto trained = meta_eval(meta_train<double>(cfg).model, cfg, 100);
  EXPECT_LT(trained.mean, untrained.mean);
}

TEST(MetaEval, MergePoolsTasks) {
  EvalReport a, b;
  a.task_losses = {1.0, 2.0};
  a.task_count = 2;
  a.per_seed = {{0, 1.5, 0, 2}};
  b.task_losses = {3.0};
  b.task_count = 1;
  b.per_seed = {{1, 3.0, 0, 1}};
  auto m = merge_reports({a, b});
  EXPECT_EQ(m.task_count, 3u);
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_EQ(m.per_seed.size(), 2u);
}

TEST(Config, ValidationCatchesMismatch) {
  auto cfg = small_config(false);
  cfg.meta_batch = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config(false);
  cfg.tasks.family = "blobs";
  EXPECT_THROW(cfg.validate(), ConfigError);
}
