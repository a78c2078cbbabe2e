#pragma once

#include <stdexcept>
#include <string>

namespace clreg {

/// Malformed configuration or invalid argument values.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Shapes that do not line up (batch width vs network input, vector lengths).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Non-finite gradients or losses during training.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File system and file format problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace detail
}  // namespace clreg
