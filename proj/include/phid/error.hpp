#pragma once

#include <stdexcept>
#include <string>

namespace phid {

/// Malformed input: bad file magic, truncated payloads, unparsable CSV or flags.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BadMagicError : public ParseError {
public:
    using ParseError::ParseError;
};

class TruncatedError : public ParseError {
public:
    TruncatedError(const std::string& what, std::size_t expected, std::size_t actual)
        : ParseError(what + ": expected " + std::to_string(expected) + " bytes, got " +
                     std::to_string(actual)),
          expected_(expected),
          actual_(actual)
    {
    }

    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

class ShapeMismatchError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Well-formed input that violates a precondition or invariant.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Singular covariance, diverging loss, and similar numerical breakdowns.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace phid
