#pragma once

#include <stdexcept>
#include <string>

namespace lmf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad shapes, out-of-range parameters, malformed config.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-finite state, singular solve, no convergence).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace lmf
