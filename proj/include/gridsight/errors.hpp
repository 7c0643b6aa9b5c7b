#pragma once

#include <stdexcept>
#include <string>

namespace gridsight {

// Invalid configuration: bad grid size, mismatched dimensions, out-of-range
// schedule epochs and the like.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid data handed to an operation: annotations out of range, malformed
// records, non-finite gradients.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File-level failures: unreadable paths, bad magic, truncated payloads.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gridsight
