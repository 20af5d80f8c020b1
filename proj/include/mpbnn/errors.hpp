#pragma once

#include <stdexcept>
#include <string>

namespace mpbnn {

// Invalid numeric argument (negative variance, out-of-range index, ...).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Mismatched tensor/parameter shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad configuration file or architecture description.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or other numerical failure during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failures, annotated with the offending path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mpbnn
