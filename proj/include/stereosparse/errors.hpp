#pragma once

#include <stdexcept>
#include <string>

namespace stereosparse {

// Tensor/kernel dimension mismatch. Messages name both offending shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file or stream. Messages carry a byte offset or line number.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: bad flag combination, out-of-range hyperparameter,
// missing required artifact.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// An iterative solver left its stable region.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace stereosparse
