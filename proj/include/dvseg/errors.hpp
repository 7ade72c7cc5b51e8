#pragma once

#include <stdexcept>
#include <string>

namespace dvseg {

// Shape/size disagreement between operands.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument value (bad factor, empty list, out-of-range config).
struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A label mask is all-target or all-background, or covers the whole image.
struct DegenerateMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or other numerical breakdown inside a solver.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file content; message names file, offset and expectation.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Synthetic scene constraints cannot be satisfied.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dvseg
