#pragma once

#include <stdexcept>
#include <string>

namespace qmt {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Precondition violations: mismatched dimensions, malformed grids, missing data.
class invalid_input : public error {
public:
  using error::error;
};

/// A configured size limit was exceeded (e.g. the exact-solver cap).
class capacity_error : public error {
public:
  using error::error;
};

/// Non-finite values produced by a numeric computation.
class numeric_error : public error {
public:
  using error::error;
};

}  // namespace qmt
