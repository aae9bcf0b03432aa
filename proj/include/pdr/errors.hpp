#pragma once

#include <stdexcept>
#include <string>

namespace pdr {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainAbort : std::runtime_error {
  explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

struct EvalError : std::runtime_error {
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by integrators when a state stops being finite.
struct IntegrationDiverged : std::runtime_error {
  IntegrationDiverged(const std::string& msg, int traj, int step_index = -1)
      : std::runtime_error(msg), trajectory(traj), step(step_index) {}
  int trajectory;
  int step;
};

}  // namespace pdr
