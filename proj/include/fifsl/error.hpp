#pragma once

#include <stdexcept>
#include <string>

namespace fifsl {

/// Raised for malformed input data, shape mismatches and numerical failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fifsl
