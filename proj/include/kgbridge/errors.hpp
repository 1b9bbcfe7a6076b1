#pragma once

#include <stdexcept>
#include <string>

namespace kgbridge {

// Malformed or inconsistent input data: bad files, unknown labels,
// violated preconditions on user-supplied values.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure: NaN/Inf in a forward pass, degenerate vectors.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kgbridge
