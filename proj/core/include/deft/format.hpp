#pragma once

#include <charconv>
#include <string>

namespace deft {

/// Locale-independent "%.9g"-style formatting; shared by every CSV writer.
inline std::string format_g9(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

/// Fixed six decimal places; used for metric columns in reports.
inline std::string format_fixed6(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  return std::string(buf, res.ptr);
}

}  // namespace deft
