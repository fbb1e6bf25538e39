#pragma once

#include <stdexcept>
#include <string>

namespace mvs {

// Bad or missing input data (files, shapes, configuration). CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric failure: non-finite values, degenerate batches, violated
// invariants discovered at runtime. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mvs
