#pragma once

#include <stdexcept>
#include <string>

namespace fedac {

/// Dimension or shape mismatch between operands.
class shape_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value or file.
class config_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite value encountered during computation.
class numeric_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operation invoked on inconsistent or empty state.
class state_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Not enough data points to perform the operation.
class insufficient_data_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedac
