#pragma once

#include <stdexcept>
#include <string>

namespace fdimon {

// Bad model/config data: dimension mismatches, non-PSD covariances,
// unparseable or invalid config files. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Misuse of an operation contract (wrong window length, bad argument).
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Iterations failed to converge on an unstable problem.
class InstabilityError : public std::runtime_error {
 public:
  explicit InstabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Too few samples for a statistical estimate.
class EstimationError : public std::runtime_error {
 public:
  explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

// No invariant operating region exists for the given system/noise. CLI exit code 2.
class SynthesisError : public std::runtime_error {
 public:
  explicit SynthesisError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered during agent training. CLI exit code 3.
class TrainingAbort : public std::runtime_error {
 public:
  explicit TrainingAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fdimon
