#pragma once

#include <stdexcept>
#include <string>

namespace narrowforge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between a layer/affine and its input. `layer_index`
// is -1 when the mismatch is not attributable to a specific layer.
struct DimensionError : Error {
    DimensionError(const std::string& what, int layer_index = -1)
        : Error(what), layer_index(layer_index) {}
    int layer_index;
};

struct NotInvertibleError : Error {
    using Error::Error;
};

struct MonotonicityError : Error {
    using Error::Error;
};

// Raised when an approximation stage cannot meet its budget. Carries the
// best error actually achieved so failures are never silent.
struct FitError : Error {
    FitError(const std::string& what, double best_error)
        : Error(what), best_error(best_error) {}
    double best_error;
};

struct ParseError : Error {
    using Error::Error;
};

}  // namespace narrowforge
