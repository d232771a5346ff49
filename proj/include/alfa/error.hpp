#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace alfa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the computation graph (unreachable tensors, mixed graphs, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity surfaced where a finite value is required.
class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(const std::string& what, long step = -1)
      : Error(what), step_(step) {}
  /// Inner-loop step at which the value was observed, -1 when not applicable.
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, version, corrupt, structural };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace alfa
