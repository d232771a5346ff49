#pragma once

// JSON and CSV renderings of evaluation reports and training logs.

#include <cstdio>
#include <string>

#include "alfa/config.hpp"

namespace alfa {

inline json report_to_json(const EvalReport& r) {
  json j;
  j["mean"] = r.mean;
  j["ci95"] = r.ci95;
  j["task_count"] = r.task_count;
  j["degenerate_ci"] = r.degenerate_ci;
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  json seeds = json::array();
  for (const auto& s : r.per_seed) {
    seeds.push_back({{"seed", s.seed}, {"mean", s.mean}, {"ci95", s.ci95}, {"task_count", s.task_count}});
  }
  j["per_seed"] = seeds;
  return j;
}

/// One row per `every` iterations, plus the last one.
inline std::string train_log_csv(const TrainLog& log, std::size_t every = 1) {
  std::string out = "iteration,support_loss,query_loss,wall_seconds\n";
  char buf[160];
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    if (r.iteration % every != 0 && i + 1 != log.records.size()) continue;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.6f\n", r.iteration, r.support_loss, r.query_loss, r.wall_seconds);
    out += buf;
  }
  return out;
}

inline std::string eval_log_csv(const TrainLog& log) {
  std::string out = "iteration,mean,ci95\n";
  char buf[128];
  for (const auto& e : log.evals) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.iteration, e.mean, e.ci95);
    out += buf;
  }
  return out;
}

}  // namespace alfa
