#pragma once

#include <stdexcept>
#include <string>

namespace ddnn {

/// Bad user input: config files, dataset directories, checkpoints, CLI
/// arguments. Maps to process exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A broken internal contract: shape mismatches, violated invariants,
/// impossible states. Maps to process exit code 2.
class InvariantError : public std::logic_error {
public:
    explicit InvariantError(const std::string& msg) : std::logic_error(msg) {}
};

} // namespace ddnn
