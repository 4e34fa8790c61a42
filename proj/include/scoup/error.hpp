#pragma once

#include <stdexcept>
#include <string>

namespace scoup {

/// Shapes or lengths that do not agree with each other.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input files, out-of-range indices, bad masks.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SVD failure, non-finite objective and similar numerical breakdowns.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail
}  // namespace scoup
