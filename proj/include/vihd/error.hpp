#pragma once

#include <stdexcept>
#include <string>

namespace vihd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is malformed: invariant violation, bad manifest, bad label file.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Declared shape disagrees with the data actually present.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied parameter is outside its domain (w > L, rho <= 0, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A computation has no meaningful answer for the given input
/// (zero-length generation, single-class AUC, everything masked).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

/// Entailment backend failed; the message names the offending pair.
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace vihd
