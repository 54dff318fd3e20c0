#pragma once

#include <stdexcept>
#include <string>

namespace adamae {

// Base class for all library errors. The C API maps each subclass to an
// error code; everything else surfaces as ADAMAE_ERR_UNKNOWN.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform, or an index is out of range.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf reached a checked boundary (losses, probabilities, activations).
class NumericError : public Error {
 public:
  using Error::Error;
};

// File format or filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Bad configuration value or architecture mismatch on load.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. adding positional encodings twice).
class LogicError : public Error {
 public:
  using Error::Error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void check_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace adamae
