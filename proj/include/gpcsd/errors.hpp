#pragma once

#include <stdexcept>
#include <string>

namespace gpcsd {

// Bad inputs: shapes, finiteness, file formats. CLI maps these to exit code 2.
struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent setup (grid/bounds mismatch, bad config file). Also exit code 2.
struct config_error : validation_error {
  explicit config_error(const std::string& msg) : validation_error(msg) {}
};

// Factorization or convergence failures. CLI maps these to exit code 3.
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gpcsd
