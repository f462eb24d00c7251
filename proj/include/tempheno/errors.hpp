#pragma once

#include <stdexcept>
#include <string>

namespace tempheno {

/// Invalid configuration or malformed input data. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A required pipeline artifact is absent on disk. CLI exit code 3.
struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or other numeric breakdown. CLI exit code 4.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tempheno
