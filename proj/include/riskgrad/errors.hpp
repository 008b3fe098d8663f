#pragma once

#include <stdexcept>
#include <string>

namespace riskgrad {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched or invalid matrix/vector dimensions, non-finite input.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// A gain was required to be stabilizing but is not.
class InstabilityError : public Error {
 public:
  explicit InstabilityError(const std::string& msg) : Error(msg) {}
};

// Iterative solver failed to converge within its budget.
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& msg) : Error(msg) {}
};

// Simulated state norm exceeded the divergence guard.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, long step) : Error(msg), step_index(step) {}
  long step_index;
};

// Invalid argument or configuration value.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Internal cross-check between two computation routes failed.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

}  // namespace riskgrad
