#pragma once

#include <stdexcept>
#include <string>

namespace dstyle {

// Error families map onto the CLI exit-code contract (see cli/commands.hpp).

/// Invalid user input: config values, file contents, checkpoint layouts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (OBJ, checkpoint, PNG, distractor lists).
class FormatError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Buffer or tensor shape disagreement.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Guidance / embedding service failures (transport or protocol).
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values during optimization.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dstyle
