#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <system_error>
#include <vector>

namespace neurocal::detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (i < line.size()) {
    while (i < line.size() && space(line[i])) ++i;
    const std::size_t b = i;
    while (i < line.size() && !space(line[i])) ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

/// Integer fields written as "12" or "12.0" are both accepted.
inline bool parse_integer(std::string_view s, std::int64_t& out) {
  if (parse_number(s, out)) return true;
  double d = 0.0;
  if (!parse_number(s, d) || !std::isfinite(d) || d != std::floor(d) || std::abs(d) > 9.0e15) return false;
  out = static_cast<std::int64_t>(d);
  return true;
}

} // namespace neurocal::detail
