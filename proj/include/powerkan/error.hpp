#pragma once

#include <stdexcept>
#include <string>

namespace powerkan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed files, dimension mismatches.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, overflow in bound propagation, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace powerkan
