#pragma once

#include <stdexcept>
#include <string>

namespace bdp {

/// Base class for every exception raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A request that is malformed or violates an operation's preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A well-formed request whose numerical work could not be completed.
class ComputationError : public Error {
 public:
  using Error::Error;
};

}  // namespace bdp
