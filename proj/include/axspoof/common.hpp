#pragma once

#include <stdexcept>
#include <string>

namespace axspoof {

// Dimension/shape disagreement between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated (non-scalar loss, degenerate
// geometry, invalid pose, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed or missing on-disk data.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value detected where finiteness is required (NaN guard).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace axspoof
