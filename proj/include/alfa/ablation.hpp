#pragma once

// Named grids of update-rule variants over one base config, and their
// tabulation.
//   steps   MAML with 5 steps, then the adaptive rule with 1..5 steps
//   table5  learning-state conditioning: weight, gradient, both
//   table6  alpha or beta, per step or per layer, fixed or generated

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "alfa/meta_trainer.hpp"

namespace alfa {

struct AblationCell {
  std::string label;
  TrainConfig config;
};

struct AblationResult {
  std::string label;
  EvalReport report;  // pooled over seeds
};

/// The base config with plain SGD at its constant rate.
inline TrainConfig maml_variant(TrainConfig base, std::size_t steps) {
  const double clamp_at = base.rule.grad_clamp;
  base.rule = UpdateRuleConfig::sgd(steps, base.rule.constant_alpha);
  base.rule.grad_clamp = clamp_at;
  return base;
}

/// The base config with the adaptive rule; a base that uses plain SGD gets
/// the default adaptive settings.
inline TrainConfig alfa_variant(TrainConfig base, std::size_t steps) {
  if (base.rule.rule == UpdateRule::sgd) {
    const double rate = base.rule.constant_alpha, clamp_at = base.rule.grad_clamp;
    base.rule = UpdateRuleConfig{};
    base.rule.constant_alpha = rate;
    base.rule.grad_clamp = clamp_at;
  }
  base.rule.steps = steps;
  return base;
}

inline std::vector<AblationCell> ablation_grid(const std::string& name, const TrainConfig& base) {
  std::vector<AblationCell> cells;
  if (name == "steps") {
    cells.push_back({"MAML (5 steps)", maml_variant(base, 5)});
    for (std::size_t s = 1; s <= 5; ++s) {
      cells.push_back({"ALFA+MAML (" + std::to_string(s) + (s == 1 ? " step)" : " steps)"), alfa_variant(base, s)});
    }
  } else if (name == "table5") {
    const std::pair<StateMode, const char*> rows[] = {{StateMode::weight_only, "weight"},
                                                      {StateMode::gradient_only, "gradient"},
                                                      {StateMode::both, "weight + gradient"}};
    for (const auto& [mode, label] : rows) {
      auto c = alfa_variant(base, base.rule.steps);
      c.rule.state_mode = mode;
      cells.push_back({label, c});
    }
  } else if (name == "table6") {
    // Alpha rows keep the decay term off; beta rows keep the constant rate.
    struct Row {
      const char* label;
      bool alpha;
      HyperMode mode;
    };
    const Row rows[] = {
        {"alpha per step, fixed", true, HyperMode::meta_fixed_per_step},
        {"alpha per step, adaptive", true, HyperMode::generated_per_step},
        {"alpha per layer, fixed", true, HyperMode::meta_fixed_per_layer},
        {"alpha per layer, adaptive", true, HyperMode::generated_per_layer},
        {"beta per step, fixed", false, HyperMode::meta_fixed_per_step},
        {"beta per step, adaptive", false, HyperMode::generated_per_step},
        {"beta per layer, fixed", false, HyperMode::meta_fixed_per_layer},
        {"beta per layer, adaptive", false, HyperMode::generated_per_layer},
    };
    for (const auto& row : rows) {
      auto c = alfa_variant(base, base.rule.steps);
      c.rule.alpha_mode = row.alpha ? row.mode : HyperMode::constant;
      c.rule.beta_mode = row.alpha ? HyperMode::off : row.mode;
      cells.push_back({row.label, c});
    }
  } else {
    throw ConfigError("ablate: unknown grid '" + name + "' (expected steps, table5 or table6)");
  }
  return cells;
}

/// Trains and evaluates every cell for every seed. `progress` receives
/// (cell index, seed, report) after each run.
template <std::floating_point T>
std::vector<AblationResult> run_ablation(
    const std::vector<AblationCell>& cells, const std::vector<std::uint64_t>& seeds,
    const std::function<void(std::size_t, std::uint64_t, const EvalReport&)>& progress = {}) {
  std::vector<AblationResult> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<EvalReport> per_seed;
    for (auto seed : seeds) {
      auto cfg = cells[i].config;
      cfg.seed = seed;
      cfg.eval_seed.reset();
      auto result = meta_train<T>(cfg);
      per_seed.push_back(meta_eval(result.model, cfg, cfg.report_tasks));
      if (progress) progress(i, seed, per_seed.back());
    }
    out.push_back({cells[i].label, merge_reports(per_seed)});
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationResult>& rows) {
  std::string out = "cell,mean,ci95,task_count\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%zu\n", r.report.mean, r.report.ci95, r.report.task_count);
    out += "\"" + r.label + "\"" + buf;
  }
  return out;
}

inline std::string ablation_text(const std::vector<AblationResult>& rows) {
  std::size_t width = 4;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %10s  %8s\n", static_cast<int>(width), "cell", "mean", "ci95");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %10.4f  %8.4f\n", static_cast<int>(width), r.label.c_str(), r.report.mean,
                  r.report.ci95);
    out += buf;
  }
  return out;
}

}  // namespace alfa
