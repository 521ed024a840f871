#pragma once

#include <stdexcept>
#include <string>

namespace gbfl {

/// Runtime failure in any stage (bad input data, model contract violation, I/O).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command line or configuration supplied by the user.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace gbfl
