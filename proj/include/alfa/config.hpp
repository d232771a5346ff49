#pragma once

// On-disk run configuration: one JSON document with sections learner,
// update_rule, train, tasks and io. Unknown keys are rejected at every
// level; omitted keys keep their defaults.

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "alfa/meta_trainer.hpp"

namespace alfa {

using json = nlohmann::ordered_json;

struct IoConfig {
  /// Checkpoint interval in iterations; 0 writes only the final checkpoint.
  std::size_t checkpoint_every = 0;
  /// Training-log CSV row interval.
  std::size_t log_every = 1;
};

struct RunConfig {
  TrainConfig train;
  IoConfig io;
};

namespace detail {

template <class E>
using EnumTable = std::vector<std::pair<E, const char*>>;

inline const EnumTable<LearnerKind>& learner_kinds() {
  static const EnumTable<LearnerKind> t{{LearnerKind::regression_mlp, "regression_mlp"},
                                        {LearnerKind::classification_mlp, "classification_mlp"}};
  return t;
}
inline const EnumTable<Activation>& activations() {
  static const EnumTable<Activation> t{{Activation::relu, "relu"}, {Activation::leaky_relu, "leaky_relu"}};
  return t;
}
inline const EnumTable<UnitGrouping>& groupings() {
  static const EnumTable<UnitGrouping> t{{UnitGrouping::per_tensor, "per_tensor"},
                                         {UnitGrouping::per_weight_tensor_only, "per_weight_tensor_only"}};
  return t;
}
inline const EnumTable<UpdateRule>& rules() {
  static const EnumTable<UpdateRule> t{{UpdateRule::sgd, "sgd"}, {UpdateRule::alfa, "alfa"}};
  return t;
}
inline const EnumTable<HyperMode>& hyper_modes() {
  static const EnumTable<HyperMode> t{{HyperMode::constant, "constant"},
                                      {HyperMode::off, "off"},
                                      {HyperMode::meta_fixed_per_step, "meta_fixed_per_step"},
                                      {HyperMode::meta_fixed_per_layer, "meta_fixed_per_layer"},
                                      {HyperMode::generated_per_step, "generated_per_step"},
                                      {HyperMode::generated_per_layer, "generated_per_layer"},
                                      {HyperMode::generated_full, "generated_full"}};
  return t;
}
inline const EnumTable<StateMode>& state_modes() {
  static const EnumTable<StateMode> t{{StateMode::both, "both"},
                                      {StateMode::weight_only, "weight_only"},
                                      {StateMode::gradient_only, "gradient_only"}};
  return t;
}
inline const EnumTable<StatePreprocess>& preprocesses() {
  static const EnumTable<StatePreprocess> t{{StatePreprocess::none, "none"},
                                            {StatePreprocess::standardize, "standardize"}};
  return t;
}
inline const EnumTable<DecayComposition>& compositions() {
  static const EnumTable<DecayComposition> t{{DecayComposition::product, "product"},
                                             {DecayComposition::replace, "replace"}};
  return t;
}
inline const EnumTable<InitMode>& init_modes() {
  static const EnumTable<InitMode> t{{InitMode::random_frozen, "random_frozen"},
                                     {InitMode::random_jointly_trained, "random_jointly_trained"},
                                     {InitMode::maml_jointly_trained, "maml_jointly_trained"}};
  return t;
}
inline const EnumTable<OuterOptimizerConfig::Kind>& optimizer_kinds() {
  static const EnumTable<OuterOptimizerConfig::Kind> t{{OuterOptimizerConfig::Kind::adam, "adam"},
                                                       {OuterOptimizerConfig::Kind::sgd, "sgd"}};
  return t;
}

template <class E>
const char* enum_name(const EnumTable<E>& table, E value) {
  for (const auto& [v, name] : table)
    if (v == value) return name;
  throw ConfigError("config: unnamed enum value");
}

/// Reads the keys of one JSON object, tracking the path for messages and
/// rejecting any key that was never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class V>
  void read(const char* key, V& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.template get<bool>();
      } else if constexpr (std::is_integral_v<V>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<V> && v.template get<long long>() < 0)) {
          throw ConfigError("");
        }
        out = v.template get<V>();
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.template get<V>();
      } else {
        out = v.template get<V>();
      }
    } catch (const std::exception&) {
      throw ConfigError("config: '" + where(key) + "' has the wrong type");
    }
  }

  template <class E>
  void read_enum(const char* key, E& out, const EnumTable<E>& table) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (v.is_string()) {
      for (const auto& [value, name] : table) {
        if (v.get<std::string>() == name) {
          out = value;
          return;
        }
      }
    }
    std::string choices;
    for (const auto& [value, name] : table) choices += (choices.empty() ? "" : ", ") + std::string(name);
    throw ConfigError("config: '" + where(key) + "' is " + v.dump() + ", must be one of: " + choices);
  }

  Section child(const char* key) {
    seen_.push_back(key);
    return Section(j_.contains(key) ? j_.at(key) : empty(), where(key));
  }

  /// Call after every read; names the first unexpected key.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ConfigError("config: unknown key '" + where(key.c_str()) + "'");
      }
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace detail

/// Builds a config from JSON, validating it. Throws ConfigError.
inline RunConfig config_from_json(const json& doc) {
  using namespace detail;
  RunConfig rc;
  TrainConfig& c = rc.train;
  Section root(doc, "");

  {
    auto s = root.child("learner");
    s.read_enum("kind", c.learner.kind, learner_kinds());
    s.read("hidden_sizes", c.learner.hidden_sizes);
    s.read("input_dim", c.learner.input_dim);
    s.read("output_dim", c.learner.output_dim);
    s.read_enum("activation", c.learner.activation, activations());
    s.read_enum("units", c.learner.units, groupings());
    s.finish();
  }
  {
    auto s = root.child("update_rule");
    s.read_enum("rule", c.rule.rule, rules());
    s.read_enum("alpha_mode", c.rule.alpha_mode, hyper_modes());
    s.read_enum("beta_mode", c.rule.beta_mode, hyper_modes());
    s.read_enum("state_mode", c.rule.state_mode, state_modes());
    s.read_enum("state_preprocess", c.rule.state_preprocess, preprocesses());
    s.read("steps", c.rule.steps);
    s.read("constant_alpha", c.rule.constant_alpha);
    s.read("constant_beta", c.rule.constant_beta);
    s.read("first_order", c.rule.first_order);
    s.read("grad_clamp", c.rule.grad_clamp);
    auto g = s.child("generator");
    g.read("bias", c.generator.bias);
    g.read("alpha0_init", c.generator.alpha0_init);
    g.read("beta0_init", c.generator.beta0_init);
    g.read("output_bias_init", c.generator.output_bias_init);
    g.read("output_weight_scale", c.generator.output_weight_scale);
    g.read_enum("randominit_beta", c.generator.decay_composition, compositions());
    g.finish();
    s.finish();
  }
  {
    auto s = root.child("train");
    s.read_enum("init_mode", c.init_mode, init_modes());
    s.read("meta_batch", c.meta_batch);
    s.read("iterations", c.iterations);
    s.read("eval_every", c.eval_every);
    s.read("eval_tasks", c.eval_tasks);
    s.read("report_tasks", c.report_tasks);
    s.read("seed", c.seed);
    const bool has_eval_seed = s.has("eval_seed");
    std::uint64_t eval_seed = 0;
    s.read("eval_seed", eval_seed);
    if (has_eval_seed) c.eval_seed = eval_seed;
    auto o = s.child("optimizer");
    o.read_enum("kind", c.optimizer.kind, optimizer_kinds());
    o.read("learning_rate", c.optimizer.learning_rate);
    o.read("beta1", c.optimizer.beta1);
    o.read("beta2", c.optimizer.beta2);
    o.read("epsilon", c.optimizer.epsilon);
    o.read("clip_norm", c.optimizer.clip_norm);
    o.finish();
    s.finish();
  }
  {
    auto s = root.child("tasks");
    s.read("family", c.tasks.family);
    s.read("k_shot", c.tasks.k_shot);
    s.read("query_size", c.tasks.query_size);
    auto sin = s.child("sinusoid");
    sin.read("amplitude_min", c.tasks.sinusoid.amplitude_min);
    sin.read("amplitude_max", c.tasks.sinusoid.amplitude_max);
    sin.read("frequency_min", c.tasks.sinusoid.frequency_min);
    sin.read("frequency_max", c.tasks.sinusoid.frequency_max);
    sin.read("phase_min", c.tasks.sinusoid.phase_min);
    sin.read("phase_max", c.tasks.sinusoid.phase_max);
    sin.read("input_min", c.tasks.sinusoid.input_min);
    sin.read("input_max", c.tasks.sinusoid.input_max);
    sin.finish();
    auto b = s.child("blobs");
    b.read("n_way", c.tasks.blobs.n_way);
    b.read("input_dim", c.tasks.blobs.input_dim);
    b.read("query_per_class", c.tasks.blobs.query_per_class);
    b.read("centroid_scale", c.tasks.blobs.centroid_scale);
    b.read("noise_scale", c.tasks.blobs.noise_scale);
    b.finish();
    s.finish();
  }
  {
    auto s = root.child("io");
    s.read("checkpoint_every", rc.io.checkpoint_every);
    s.read("log_every", rc.io.log_every);
    if (rc.io.log_every == 0) throw ConfigError("config: 'io.log_every' must be positive");
    s.finish();
  }
  root.finish();
  c.validate();
  return rc;
}

/// Fully resolved config, every field present.
inline json config_to_json(const RunConfig& rc) {
  using namespace detail;
  const TrainConfig& c = rc.train;
  json j;
  j["learner"] = {{"kind", enum_name(learner_kinds(), c.learner.kind)},
                  {"hidden_sizes", c.learner.hidden_sizes},
                  {"input_dim", c.learner.input_dim},
                  {"output_dim", c.learner.output_dim},
                  {"activation", enum_name(activations(), c.learner.activation)},
                  {"units", enum_name(groupings(), c.learner.units)}};
  j["update_rule"] = {{"rule", enum_name(rules(), c.rule.rule)},
                      {"alpha_mode", enum_name(hyper_modes(), c.rule.alpha_mode)},
                      {"beta_mode", enum_name(hyper_modes(), c.rule.beta_mode)},
                      {"state_mode", enum_name(state_modes(), c.rule.state_mode)},
                      {"state_preprocess", enum_name(preprocesses(), c.rule.state_preprocess)},
                      {"steps", c.rule.steps},
                      {"constant_alpha", c.rule.constant_alpha},
                      {"constant_beta", c.rule.constant_beta},
                      {"first_order", c.rule.first_order},
                      {"grad_clamp", c.rule.grad_clamp},
                      {"generator",
                       {{"bias", c.generator.bias},
                        {"alpha0_init", c.generator.alpha0_init},
                        {"beta0_init", c.generator.beta0_init},
                        {"output_bias_init", c.generator.output_bias_init},
                        {"output_weight_scale", c.generator.output_weight_scale},
                        {"randominit_beta", enum_name(compositions(), c.generator.decay_composition)}}}};
  j["train"] = {{"init_mode", enum_name(init_modes(), c.init_mode)},
                {"meta_batch", c.meta_batch},
                {"iterations", c.iterations},
                {"eval_every", c.eval_every},
                {"eval_tasks", c.eval_tasks},
                {"report_tasks", c.report_tasks},
                {"seed", c.seed},
                {"eval_seed", c.resolved_eval_seed()},
                {"optimizer",
                 {{"kind", enum_name(optimizer_kinds(), c.optimizer.kind)},
                  {"learning_rate", c.optimizer.learning_rate},
                  {"beta1", c.optimizer.beta1},
                  {"beta2", c.optimizer.beta2},
                  {"epsilon", c.optimizer.epsilon},
                  {"clip_norm", c.optimizer.clip_norm}}}};
  const auto& sn = c.tasks.sinusoid;
  const auto& bl = c.tasks.blobs;
  j["tasks"] = {{"family", c.tasks.family},
                {"k_shot", c.tasks.k_shot},
                {"query_size", c.tasks.query_size},
                {"sinusoid",
                 {{"amplitude_min", sn.amplitude_min},
                  {"amplitude_max", sn.amplitude_max},
                  {"frequency_min", sn.frequency_min},
                  {"frequency_max", sn.frequency_max},
                  {"phase_min", sn.phase_min},
                  {"phase_max", sn.phase_max},
                  {"input_min", sn.input_min},
                  {"input_max", sn.input_max}}},
                {"blobs",
                 {{"n_way", bl.n_way},
                  {"input_dim", bl.input_dim},
                  {"query_per_class", bl.query_per_class},
                  {"centroid_scale", bl.centroid_scale},
                  {"noise_scale", bl.noise_scale}}}};
  j["io"] = {{"checkpoint_every", rc.io.checkpoint_every}, {"log_every", rc.io.log_every}};
  return j;
}

inline json config_to_json(const TrainConfig& c) { return config_to_json(RunConfig{c, {}}); }

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace alfa
