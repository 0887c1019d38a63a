#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lvo {

// Error taxonomy shared by the library, the C API and the CLI.
// The CLI maps these to its exit codes (usage=1, format=2, validation=3,
// anything else=4).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Number of worker threads for internally parallel loops. 0 means
// "decide automatically". Controlled by the LVO_PIPELINE_THREADS env var.
int thread_budget();

}  // namespace lvo
