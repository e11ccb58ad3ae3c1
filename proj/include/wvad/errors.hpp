#pragma once

#include <stdexcept>
#include <string>

namespace wvad {

// Exit-code contract used by the CLI: validation/usage problems map to 2,
// runtime/numeric failures to 3.

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : ValidationError {
    explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

struct ParseError : ValidationError {
    explicit ParseError(const std::string& msg) : ValidationError(msg) {}
};

struct UsageError : ValidationError {
    explicit UsageError(const std::string& msg) : ValidationError(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wvad
