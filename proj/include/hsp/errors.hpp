#pragma once

#include <stdexcept>
#include <string>

namespace hsp {

// Invalid configuration or parameter combination.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an operation's contract.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A primitive produced NaN or Inf.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. backward on a detached or non-scalar value.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A gradient check could not be carried out meaningfully.
struct CheckInvalidError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Undecodable image/mask or label out of range.
struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hsp
