// errors.hpp: exception hierarchy shared by all modules
//
// InputError maps to CLI exit code 2, NumericError (and its subclasses) to 3.

#pragma once

#include <stdexcept>
#include <string>

namespace pcwqed {

class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when data carry no information about a fitted parameter (e.g. a flat profile).
class IdentifiabilityError : public NumericError {
public:
    using NumericError::NumericError;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InputError(what);
}

} // namespace detail

} // namespace pcwqed
