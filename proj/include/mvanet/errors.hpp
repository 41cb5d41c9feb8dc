#ifndef MVANET_ERRORS_HPP
#define MVANET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mvanet {

// Shape/placement violations in view decomposition and reassembly.
struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& msg) : std::runtime_error("geometry error: " + msg) {}
};

// Invalid model or run configuration (widths, heads, divisibility, keys).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Batch axis does not partition into the expected global + local views.
struct PartitionError : std::runtime_error {
    explicit PartitionError(const std::string& msg) : std::runtime_error("partition error: " + msg) {}
};

// File/stream level failures (datasets, checkpoints, images).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

} // namespace mvanet

#endif
