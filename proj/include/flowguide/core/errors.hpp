#pragma once

#include <stdexcept>
#include <string>

namespace flowguide {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor dimensions do not satisfy an operation's precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A runtime check (gradient check, freezing assertion, loss identity) failed.
class CheckFailure : public Error {
 public:
  using Error::Error;
};

/// Training loss exceeded the divergence bound.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace flowguide
