#pragma once

#include <stdexcept>
#include <string>

namespace mlat {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible operand shapes; the message names the primitive and both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A parameter node refers to a name the bound store does not hold.
class UnresolvedParameter : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced where finite values are required (activations, gradients, ODE state).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// 6D rotation input whose columns are zero or parallel, so Gram-Schmidt has no unique result.
class DegenerateRotation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Input violates an operation's documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable on-disk artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Configuration file / flag problems (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A training stage was invoked without the checkpoint of the stage it builds on (CLI exit code 3).
class PrerequisiteError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlat
