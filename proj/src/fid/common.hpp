#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fid {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / broadcast violations.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf detected at an op boundary, or a diverged computation.
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Bad config file, schema mismatch, checkpoint/architecture mismatch.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace fid
