#pragma once

#include <stdexcept>
#include <string>

namespace lra {

/// Incompatible matrix/layer dimensions.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// A value outside an operation's admissible range.
struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid experiment/network configuration (reported before any work starts).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (bad magic, truncated payload, ...).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// update_angle on a zero-norm update set.
struct DegenerateAngleError : std::runtime_error {
    explicit DegenerateAngleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lra
