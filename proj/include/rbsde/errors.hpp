#pragma once

#include <stdexcept>
#include <string>

namespace rbsde {

// Invalid scenario/tube/run configuration. CLI exit code 1.
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad call arguments (out-of-range time, empty solution, violated precondition).
// Treated as a configuration-class failure at the CLI boundary.
class input_error : public std::runtime_error {
public:
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Runtime numerical failure (non-finite state, non-convergence, rank
// deficiency). CLI exit code 2.
class numerical_error : public std::runtime_error {
public:
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rbsde
