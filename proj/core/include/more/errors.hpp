#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace more {

// Shape/dimension mismatch in tensor arithmetic.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad argument value (k out of range, invalid thresholds, ...).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numeric domain violation (log of non-positive, NaN loss, ...).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed checkpoint file; offset is the byte position of the failure.
struct CheckpointError : std::runtime_error {
  CheckpointError(const std::string& msg, std::size_t at)
      : std::runtime_error(msg + " (offset " + std::to_string(at) + ")"),
        offset(at) {}
  std::size_t offset;
};

// Could not place a shape after the retry budget.
struct PlacementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown key, unparsable value).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace more
