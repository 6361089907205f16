#pragma once

#include <stdexcept>
#include <string>

namespace affect {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes: Usage/Config -> 1, data errors -> 2, numeric -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape disagreement between operands or between a file and a config.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk payload; messages name the byte offset where possible.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Label or argument outside its admissible domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a tensor or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse at runtime, e.g. a second backward over the same tape.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace affect
