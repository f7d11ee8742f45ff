#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace pmbm {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (non-finite field, degenerate box, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A point at or behind the camera plane was projected.
class BehindCamera : public Error {
public:
    using Error::Error;
};

/// Covariance factorization or innovation inversion failed.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A cost matrix admits no assignment with finite cost.
class InfeasibleAssignment : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line number (0 when not line-specific).
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)),
          line_(line) {}

    [[nodiscard]] const std::string& source() const noexcept { return source_; }
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

/// File could not be opened or written.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace pmbm
