#pragma once

#include <stdexcept>
#include <string>

namespace hscat {

// Invalid user input or configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Mismatched tensor/grid/image dimensions.
class ShapeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, int line)
        : ConfigError(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

// Malformed or corrupted files on disk.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN losses, divergence and other numerical failures. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hscat
