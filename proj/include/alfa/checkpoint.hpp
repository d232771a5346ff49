#pragma once

// Single-file checkpoints and trace export.
//
// Checkpoint layout:
//   line 1   "ALFA-CKPT <version>"
//   line 2   byte length of the JSON header
//   header   JSON: config, counters, tensor table, payload crc32, log
//   payload  tensor values, little-endian IEEE-754, in table order

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "alfa/config.hpp"

namespace alfa {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "ALFA-CKPT";

template <std::floating_point T>
struct Checkpoint {
  int version = kCheckpointVersion;
  RunConfig config;
  TrainerState<T> state;
};

namespace detail {

template <std::floating_point T>
constexpr const char* dtype_name() {
  return sizeof(T) == 8 ? "float64" : "float32";
}

template <std::floating_point T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const auto bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

template <std::floating_point T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(p[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

inline std::uint32_t crc32_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline json log_to_json(const TrainLog& log) {
  json records = json::array();
  for (const auto& r : log.records) {
    records.push_back({r.iteration, r.support_loss, r.query_loss, r.wall_seconds});
  }
  json evals = json::array();
  for (const auto& e : log.evals) evals.push_back({e.iteration, e.mean, e.ci95});
  return {{"records", records}, {"evals", evals}};
}

inline TrainLog log_from_json(const json& j) {
  TrainLog log;
  for (const auto& r : j.at("records")) {
    log.records.push_back({r.at(0).get<std::size_t>(), r.at(1).get<double>(), r.at(2).get<double>(),
                           r.at(3).get<double>()});
  }
  for (const auto& e : j.at("evals")) {
    log.evals.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>()});
  }
  return log;
}

}  // namespace detail

/// Throws CheckpointError(structural) when `saved` cannot seed a run of
/// `runtime`: different unit count, step count, learner shape or set of
/// meta-learned tensors.
inline void check_compatible(const TrainConfig& saved, const TrainConfig& runtime) {
  auto fail = [](const std::string& what, const std::string& a, const std::string& b) {
    throw CheckpointError(CheckpointError::Kind::structural,
                          "checkpoint: " + what + " is " + a + " in the checkpoint but " + b + " in the run");
  };
  auto sizes = [](const LearnerSpec& s) {
    std::string out = std::to_string(s.input_dim);
    for (auto h : s.hidden_sizes) out += "-" + std::to_string(h);
    return out + "-" + std::to_string(s.output_dim);
  };
  const auto n_saved = unit_map(saved.learner).units();
  const auto n_run = unit_map(runtime.learner).units();
  if (n_saved != n_run) fail("N (layer units)", std::to_string(n_saved), std::to_string(n_run));
  if (saved.rule.steps != runtime.rule.steps) {
    fail("S (inner steps)", std::to_string(saved.rule.steps), std::to_string(runtime.rule.steps));
  }
  if (sizes(saved.learner) != sizes(runtime.learner)) fail("learner shape", sizes(saved.learner), sizes(runtime.learner));
  const json a = config_to_json(saved), b = config_to_json(runtime);
  for (const char* key : {"rule", "alpha_mode", "beta_mode"}) {
    if (a["update_rule"][key] != b["update_rule"][key]) {
      fail(std::string("update_rule.") + key, a["update_rule"][key].get<std::string>(),
           b["update_rule"][key].get<std::string>());
    }
  }
  if (saved.generator.bias != runtime.generator.bias) {
    fail("generator bias", saved.generator.bias ? "on" : "off", runtime.generator.bias ? "on" : "off");
  }
  if (a["train"]["init_mode"] != b["train"]["init_mode"]) {
    fail("train.init_mode", a["train"]["init_mode"].get<std::string>(), b["train"]["init_mode"].get<std::string>());
  }
}

template <std::floating_point T>
void save_checkpoint(const std::string& path, const RunConfig& config, const TrainerState<T>& state) {
  json table = json::array();
  std::string payload;
  auto add_group = [&](const char* group, const ParamSet<T>& set) {
    for (const auto& e : set.entries()) {
      table.push_back({{"group", group}, {"name", e.name}, {"shape", e.tensor.shape()}, {"offset", payload.size()}});
      for (T v : e.tensor.values()) detail::put_le(payload, v);
    }
  };
  add_group("model", state.model);
  add_group("adam_m", state.first_moment);
  add_group("adam_v", state.second_moment);

  json header;
  header["format_version"] = kCheckpointVersion;
  header["dtype"] = detail::dtype_name<T>();
  header["config"] = config_to_json(config);
  header["iteration"] = state.iteration;
  header["rng"] = {{"meta_train_cursor", state.train_cursor}};
  header["optimizer_steps"] = state.optimizer_steps;
  header["tensors"] = table;
  header["payload_bytes"] = payload.size();
  header["crc32"] = detail::crc32_of(payload);
  header["log"] = detail::log_to_json(state.log);
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot write '" + tmp + "'");
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << text.size() << '\n' << text << payload;
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot move into '" + path + "': " + ec.message());
}

template <std::floating_point T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  using K = CheckpointError::Kind;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(K::io, "checkpoint: cannot open '" + path + "'");
  std::string magic_line, length_line;
  std::getline(in, magic_line);
  std::getline(in, length_line);
  const std::string prefix = std::string(kCheckpointMagic) + " ";
  if (!magic_line.starts_with(prefix)) throw CheckpointError(K::corrupt, "checkpoint: '" + path + "' is not a checkpoint");
  int version = 0;
  try {
    version = std::stoi(magic_line.substr(prefix.size()));
  } catch (const std::exception&) {
    throw CheckpointError(K::corrupt, "checkpoint: unreadable version line '" + magic_line + "'");
  }
  if (version != kCheckpointVersion) {
    throw CheckpointError(K::version, "checkpoint: format version " + std::to_string(version) +
                                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::size_t header_len = 0;
  try {
    header_len = std::stoull(length_line);
  } catch (const std::exception&) {
    throw CheckpointError(K::corrupt, "checkpoint: unreadable header length");
  }
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::size_t>(in.gcount()) != header_len) throw CheckpointError(K::corrupt, "checkpoint: truncated header");
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(K::corrupt, std::string("checkpoint: header is not valid JSON: ") + e.what());
  }

  Checkpoint<T> ck;
  try {
    if (header.at("dtype").get<std::string>() != detail::dtype_name<T>()) {
      throw CheckpointError(K::structural, "checkpoint: dtype is " + header.at("dtype").get<std::string>() +
                                               " in the checkpoint but " + detail::dtype_name<T>() + " in the run");
    }
    if (payload.size() != header.at("payload_bytes").get<std::size_t>()) {
      throw CheckpointError(K::corrupt, "checkpoint: payload is " + std::to_string(payload.size()) + " bytes, header says " +
                                            std::to_string(header.at("payload_bytes").get<std::size_t>()));
    }
    if (detail::crc32_of(payload) != header.at("crc32").get<std::uint32_t>()) {
      throw CheckpointError(K::corrupt, "checkpoint: payload checksum mismatch in '" + path + "'");
    }
    ck.version = version;
    ck.config = config_from_json(header.at("config"));
    ck.state.iteration = header.at("iteration").get<std::size_t>();
    ck.state.train_cursor = header.at("rng").at("meta_train_cursor").get<std::uint64_t>();
    ck.state.optimizer_steps = header.at("optimizer_steps").get<std::size_t>();
    ck.state.log = detail::log_from_json(header.at("log"));
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    for (const auto& e : header.at("tensors")) {
      const Shape shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t count = shape_size(shape);
      if (offset + count * sizeof(T) > payload.size()) throw CheckpointError(K::corrupt, "checkpoint: tensor outside payload");
      std::vector<T> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = detail::get_le<T>(bytes + offset + i * sizeof(T));
      const auto group = e.at("group").get<std::string>();
      const auto name = e.at("name").get<std::string>();
      Tensor<T> t(shape, std::move(values));
      if (group == "model") {
        ck.state.model.add(name, std::move(t));
      } else if (group == "adam_m") {
        ck.state.first_moment.add(name, std::move(t));
      } else if (group == "adam_v") {
        ck.state.second_moment.add(name, std::move(t));
      } else {
        throw CheckpointError(K::corrupt, "checkpoint: unknown tensor group '" + group + "'");
      }
    }
  } catch (const json::exception& e) {
    throw CheckpointError(K::corrupt, std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(K::corrupt, std::string("checkpoint: embedded config rejected: ") + e.what());
  }
  return ck;
}

/// Restores a trainer for `runtime` from a checkpoint, after the structural
/// check and a tensor-by-tensor shape check.
template <std::floating_point T>
MetaTrainer<T> resume_trainer(const TrainConfig& runtime, const Checkpoint<T>& ck) {
  check_compatible(ck.config.train, runtime);
  const auto expected = init_model<T>(runtime).all();
  auto mismatch = [](const std::string& msg) { throw CheckpointError(CheckpointError::Kind::structural, msg); };
  if (ck.state.model.size() != expected.size()) {
    mismatch("checkpoint: " + std::to_string(ck.state.model.size()) + " model tensors in the checkpoint but " +
             std::to_string(expected.size()) + " in the run");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (ck.state.model.name(i) != expected.name(i) || ck.state.model[i].shape() != expected[i].shape()) {
      mismatch("checkpoint: tensor " + ck.state.model.name(i) + " " + shape_string(ck.state.model[i].shape()) +
               " in the checkpoint but " + expected.name(i) + " " + shape_string(expected[i].shape()) + " in the run");
    }
  }
  return MetaTrainer<T>(runtime, ck.state);
}

/// Unit names in trace order for a learner.
inline std::vector<std::string> trace_unit_names(const LearnerSpec& spec) { return unit_map(spec).unit_names; }

/// CSV of every (task, step, unit) value, 17 significant digits.
inline std::string format_trace(const std::vector<AdaptationTrace>& traces, const std::vector<std::string>& unit_names) {
  if (traces.empty()) throw ConfigError("export_trace: no traces");
  std::string out = "task_id,step,unit_name,alpha,beta,support_loss\n";
  char buf[128];
  for (std::size_t t = 0; t < traces.size(); ++t) {
    for (const auto& s : traces[t].steps) {
      if (s.alpha.size() != unit_names.size() || s.beta.size() != unit_names.size()) {
        throw ShapeError("export_trace: " + std::to_string(s.alpha.size()) + " values for " +
                         std::to_string(unit_names.size()) + " units");
      }
      for (std::size_t k = 0; k < unit_names.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,", t, s.step);
        out += buf;
        out += unit_names[k];
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", s.alpha[k], s.beta[k], s.support_loss);
        out += buf;
      }
    }
  }
  return out;
}

inline void export_trace(const std::vector<AdaptationTrace>& traces, const std::vector<std::string>& unit_names,
                         const std::string& path) {
  const std::string text = format_trace(traces, unit_names);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("export_trace: cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("export_trace: write to '" + path + "' failed");
}

}  // namespace alfa
