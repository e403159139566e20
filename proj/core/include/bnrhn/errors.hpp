#pragma once

#include <stdexcept>
#include <string>

namespace bnrhn {

/// Operand shapes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A component was asked to run with an inconsistent or invalid setup.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data (tokens, features, files) violates a documented contract.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced or received a NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inference-mode batch norm was used before any running-statistics update.
class UninitializedStatisticsError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Cache and parameters handed to a backward pass do not belong together.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace bnrhn
