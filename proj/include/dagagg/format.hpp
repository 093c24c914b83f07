#pragma once

#include <array>
#include <charconv>
#include <string>

namespace dagagg {

/// Shortest round-trip decimal form; identical bits give identical text.
inline std::string format_real(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), ptr);
}

}  // namespace dagagg
