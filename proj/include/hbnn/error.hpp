#pragma once

#include <stdexcept>
#include <string>

namespace hbnn {

/// Caller broke a precondition: dimension/model mismatch, bad config, unknown kind.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced (or would produce) a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hbnn
