#pragma once

#include <stdexcept>
#include <string>

namespace lipar {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input data (CSV rows, binary files, JSON configs).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Tensor shape or dimension mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Filesystem / serialization failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

void log_warn(const std::string& msg);

} // namespace lipar
