#pragma once

#include <stdexcept>
#include <string>

namespace qfl {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Requested qubit count exceeds what the simulator can hold.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Qubit index out of range, or CX with control == target.
class IndexError : public Error {
public:
    using Error::Error;
};

// Feature vector cannot be turned into a valid quantum state.
class EncodingError : public Error {
public:
    using Error::Error;
};

// Parameter vector / dataset dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside the domain of the operation (empty dataset, bad fraction, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Aggregation weights negative or not summing to one.
class WeightError : public Error {
public:
    using Error::Error;
};

class SettingsError : public Error {
public:
    using Error::Error;
};

class PartitionError : public Error {
public:
    using Error::Error;
};

// Norm drift or another broken internal invariant. Indicates a bug.
class InternalError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::string what, std::size_t line)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error("config key '" + key + "': " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace qfl
