#pragma once

#include <stdexcept>
#include <string>

namespace pmrf {

// All exceptions carry a "context: message" string so a failure deep in a
// pipeline still names the operation that rejected the input.

// Structural problems with an argument: wrong rank, mismatched extents,
// extents that are zero/negative, even kernel sizes, and the like.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& context, const std::string& message)
      : std::invalid_argument(context + ": " + message) {}
};

// An argument with the right shape but an out-of-contract value
// (fraction outside [0,1], non-finite scalar, unknown enum name, ...).
class ValueError : public std::invalid_argument {
 public:
  ValueError(const std::string& context, const std::string& message)
      : std::invalid_argument(context + ": " + message) {}
};

// Numeric failure discovered while computing: loss of symmetry,
// a singular matrix where a positive-definite one was required,
// non-finite values appearing mid-computation.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& context, const std::string& message)
      : std::runtime_error(context + ": " + message) {}
};

// File-format and filesystem failures (checkpoints, IDX archives, reports).
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& context, const std::string& message)
      : std::runtime_error(context + ": " + message) {}
};

// Problems with experiment configuration text or cross-field validation.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& context, const std::string& message)
      : std::runtime_error(context + ": " + message) {}
};

}  // namespace pmrf
