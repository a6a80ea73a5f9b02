#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace fedac {

/// Shortest round-trip decimal form, locale-independent; non-finite values
/// become nan/inf/-inf.
inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace fedac
