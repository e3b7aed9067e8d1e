#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lighten {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A precondition on an argument value was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// An iterative routine hit its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::size_t iterations)
        : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
          iterations_(iterations) {}
    std::size_t iterations() const noexcept { return iterations_; }

private:
    std::size_t iterations_;
};

// A NaN or Inf appeared where only finite values are allowed.
class NumericError : public Error {
public:
    using Error::Error;
};

// The requested compression target cannot be met.
class InfeasibleTarget : public Error {
public:
    using Error::Error;
};

// A user-supplied configuration is malformed.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace lighten
