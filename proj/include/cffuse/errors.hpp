#pragma once

#include <stdexcept>

namespace cffuse {

/// Operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation left the finite range or a numeric precondition failed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Out-of-range or malformed configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file contents. Messages carry the path and byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cffuse
