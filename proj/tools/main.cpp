// alfa: meta-train, evaluate, run ablation grids and gradient self-checks.
//
// Exit codes: 0 ok, 1 other failure, 2 config, 3 numeric, 4 checkpoint,
// 5 gradient check.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alfa/ablation.hpp"
#include "alfa/checkpoint.hpp"
#include "alfa/gradcheck.hpp"
#include "alfa/report.hpp"

namespace fs = std::filesystem;
using namespace alfa;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kNumeric = 3, kCheckpoint = 4, kGradcheck = 5 };

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void fail_line(const char* kind, const std::string& message) {
  json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

/// Runs a command body, mapping library errors to exit codes.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    fail_line("config", e.what());
    return kConfig;
  } catch (const NonFiniteError& e) {
    fail_line("numeric", e.what());
    return kNumeric;
  } catch (const CheckpointError& e) {
    fail_line("checkpoint", e.what());
    return kCheckpoint;
  } catch (const std::exception& e) {
    fail_line("error", e.what());
    return kOther;
  }
}

std::string checkpoint_name(std::size_t iteration) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "ckpt-%08zu.ckpt", iteration);
  return buf;
}

struct TrainArgs {
  std::string config, out, resume;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  rc.train.validate();
  const TrainConfig& cfg = rc.train;

  fs::create_directories(a.out);
  write_file(fs::path(a.out) / "resolved_config.json", config_to_json(rc).dump(2) + "\n");

  std::optional<MetaTrainer<double>> trainer;
  if (!a.resume.empty()) {
    trainer.emplace(resume_trainer(cfg, load_checkpoint<double>(a.resume)));
  } else {
    trainer.emplace(cfg);
  }
  const auto every = rc.io.checkpoint_every;
  trainer->train(cfg.iterations, [&](const MetaTrainer<double>& t) {
    if (every && t.iteration() % every == 0 && t.iteration() < cfg.iterations) {
      save_checkpoint((fs::path(a.out) / checkpoint_name(t.iteration())).string(), rc, t.state());
    }
  });
  save_checkpoint((fs::path(a.out) / "final.ckpt").string(), rc, trainer->state());
  write_file(fs::path(a.out) / "train_log.csv", train_log_csv(trainer->log(), rc.io.log_every));
  write_file(fs::path(a.out) / "eval_log.csv", eval_log_csv(trainer->log()));

  auto report = meta_eval(trainer->model(), cfg, cfg.report_tasks);
  json j = report_to_json(report);
  j["iterations"] = trainer->iteration();
  write_file(fs::path(a.out) / "report.json", j.dump(2) + "\n");
  std::printf("trained %zu iterations; eval mean %.6g +- %.6g over %zu tasks\n", trainer->iteration(), report.mean,
              report.ci95, report.task_count);
  return kOk;
}

struct EvalArgs {
  std::string config, checkpoint, trace;
  std::optional<std::size_t> tasks;
};

int cmd_eval(const EvalArgs& a) {
  const RunConfig rc = load_config(a.config);
  const auto ck = load_checkpoint<double>(a.checkpoint);
  const auto trainer = resume_trainer(rc.train, ck);
  const std::size_t n = a.tasks.value_or(rc.train.report_tasks);
  std::vector<AdaptationTrace> traces;
  auto report = meta_eval(trainer.model(), rc.train, n, a.trace.empty() ? nullptr : &traces);
  if (!a.trace.empty()) export_trace(traces, trace_unit_names(rc.train.learner), a.trace);
  std::cout << report_to_json(report).dump(2) << "\n";
  return kOk;
}

struct AblateArgs {
  std::string config, grid, out;
  std::vector<std::uint64_t> seeds;
};

int cmd_ablate(const AblateArgs& a) {
  const RunConfig rc = load_config(a.config);
  const auto cells = ablation_grid(a.grid, rc.train);
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty()) seeds.push_back(rc.train.seed);
  for (const auto& c : cells) c.config.validate();
  auto rows = run_ablation<double>(cells, seeds, [&](std::size_t i, std::uint64_t seed, const EvalReport& r) {
    std::fprintf(stderr, "[%zu/%zu] %s, seed %llu: %.6g\n", i + 1, cells.size(), cells[i].label.c_str(),
                 static_cast<unsigned long long>(seed), r.mean);
  });
  const std::string csv = a.out.empty() ? "ablation_" + a.grid + ".csv" : a.out;
  write_file(csv, ablation_csv(rows));
  std::cout << ablation_text(rows);
  return kOk;
}

struct GradcheckArgs {
  std::string size = "tiny";
  int precision = 64;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.precision != 64) throw ConfigError("gradcheck: only --precision 64 is supported");
  // Negative-control hook: corrupt one op's backward rule.
  if (const char* inject = std::getenv("ALFA_GRADCHECK_INJECT")) {
    bool found = false;
    for (int k = 0; k <= static_cast<int>(Op::reshape); ++k) {
      if (std::string(op_name(static_cast<Op>(k))) == inject) {
        detail::injected_fault() = static_cast<Op>(k);
        found = true;
      }
    }
    if (!found) throw ConfigError(std::string("gradcheck: unknown op '") + inject + "' in ALFA_GRADCHECK_INJECT");
  }
  GradcheckOptions opt;
  opt.size = a.size;
  opt.seed = a.seed;
  bool ok = true;
  for (const auto& r : run_gradcheck(opt)) {
    std::printf("%-28s max_rel_err %.3e  tol %.0e  %s  (%zu checked, worst at %s)\n", r.suite.c_str(), r.max_error,
                r.tolerance, r.ok() ? "ok" : "FAIL", r.checked, r.worst.c_str());
    if (!r.ok()) {
      ok = false;
      std::fprintf(stderr, "gradcheck failed: %s (%s) error %.3e > %.0e\n", r.suite.c_str(), r.worst.c_str(),
                   r.max_error, r.tolerance);
    }
  }
  return ok ? kOk : kGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive inner-loop meta-learning: train, eval, ablate, gradcheck"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Meta-train from a JSON config");
  t->add_option("--config", train.config, "Run config (JSON)")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--seed", train.seed, "Override train.seed");
  t->add_option("--resume", train.resume, "Continue from a checkpoint");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on fresh tasks");
  e->add_option("--config", eval.config, "Run config (JSON)")->required();
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("--tasks", eval.tasks, "Number of eval tasks (default train.report_tasks)");
  e->add_option("--export-trace", eval.trace, "Write per-step hyperparameters to this CSV");

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "Run an ablation grid");
  ab->add_option("--config", ablate.config, "Base run config (JSON)")->required();
  ab->add_option("--grid", ablate.grid, "steps, table5 or table6")->required();
  ab->add_option("--seeds", ablate.seeds, "Seeds to pool (default train.seed)");
  ab->add_option("--out", ablate.out, "CSV path (default ablation_<grid>.csv)");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference self-check");
  g->add_option("--size", gc.size, "tiny or small")->check(CLI::IsMember({"tiny", "small"}));
  g->add_option("--precision", gc.precision, "Floating-point bits (64)");
  g->add_option("--seed", gc.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  if (*t) return guarded([&] { return cmd_train(train); });
  if (*e) return guarded([&] { return cmd_eval(eval); });
  if (*ab) return guarded([&] { return cmd_ablate(ablate); });
  return guarded([&] { return cmd_gradcheck(gc); });
}
