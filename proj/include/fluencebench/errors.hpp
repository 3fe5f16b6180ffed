#pragma once
#include <stdexcept>
#include <string>

namespace fluencebench {

// Bad or inconsistent user input: malformed files, invalid configs,
// out-of-range parameters. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric breakdown at runtime: non-finite losses or gradients,
// degenerate references. CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fluencebench
