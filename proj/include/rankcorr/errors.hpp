#pragma once

#include <stdexcept>
#include <string>

namespace rankcorr {

// Invalid or inconsistent input data (bad CSV, kind mismatch, degenerate
// dataset shapes). Maps to CLI exit code 2.
class data_error : public std::runtime_error {
public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure during estimation (non-convergence, separation,
// degenerate variance, singular system). Maps to CLI exit code 3.
class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rankcorr
