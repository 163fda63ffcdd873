#pragma once

#include <charconv>
#include <string>

namespace lenopt {

/// Shortest decimal text that reads back to exactly `v`.
inline std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

}  // namespace lenopt
