#pragma once

#include <stdexcept>
#include <string>

namespace rfpc {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Two curves/samples do not live on the same grid.
class GridMismatchError : public Error {
public:
    using Error::Error;
};

/// Not enough observations or grid points for the requested operation.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Scale equation has no positive root (e.g. too many exact zeros).
class NoRootError : public Error {
public:
    using Error::Error;
};

/// Data rank exhausted before the requested number of components.
class RankExhaustedError : public Error {
public:
    using Error::Error;
};

/// A linear system is singular beyond the configured threshold.
class SingularError : public Error {
public:
    using Error::Error;
};

/// Degenerate input (all-equal responses, zero signal, leverage of one, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// CSV/JSON input could not be parsed; carries a 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, long line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

}  // namespace rfpc
