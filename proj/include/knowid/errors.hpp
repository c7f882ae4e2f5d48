#pragma once

#include <stdexcept>
#include <string>

namespace knowid {

// Bad input files or inconsistent corpus contents. CLI exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad flags or configuration values. CLI exit code 1.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Anything that goes wrong after inputs were validated. CLI exit code 3.
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace knowid
