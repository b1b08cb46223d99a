#pragma once

// Helpers shared by the text file formats: 17-significant-digit reals,
// delimiter splitting, strict number parsing.

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "vinslab/errors.hpp"

namespace vinslab::text {

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(s.substr(start)));
      return out;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline double parse_real(std::string_view s, long line) {
  s = trim(s);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw ParseError("expected a real number, got '" + std::string(s) + "'", line);
  }
  return v;
}

inline long parse_integer(std::string_view s, long line) {
  s = trim(s);
  long v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw ParseError("expected an integer, got '" + std::string(s) + "'", line);
  }
  return v;
}

template <typename Range>
std::string join_reals(const Range& values, char delim = ',') {
  std::string out;
  bool first = true;
  for (double v : values) {
    if (!first) out += delim;
    out += format_real(v);
    first = false;
  }
  return out;
}

}  // namespace vinslab::text
