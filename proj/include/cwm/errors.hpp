#pragma once

#include <stdexcept>
#include <string>

namespace cwm {

/// Violated precondition on an argument: wrong dimension, non-simplex weights,
/// out-of-range index and the like.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown during fitting (non-finite objective, collapsed component).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base class for malformed inputs read from disk.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace cwm
