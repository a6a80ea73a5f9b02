#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedac {

/// Dense row-major matrix of doubles. Deliberately minimal; numerical kernels
/// index it directly.
struct RealMatrix {
  std::vector<double> values;
  int rows = 0;
  int cols = 0;

  RealMatrix() = default;
  RealMatrix(int r, int c) : values(static_cast<std::size_t>(r) * c, 0.0), rows(r), cols(c) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) {
    return {values.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    return {values.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  bool operator==(const RealMatrix&) const = default;
};

}  // namespace fedac
