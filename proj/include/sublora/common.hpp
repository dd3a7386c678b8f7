#pragma once

#include <stdexcept>
#include <string>

namespace sublora {

// Numerical failure during evaluation or training (non-finite values,
// degenerate metrics). CLI maps this to exit code 2.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Guard against exhaustive routines being called on inputs too large to
// enumerate.
struct CapacityError : std::length_error {
    using std::length_error::length_error;
};

inline void require_arg(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace sublora
