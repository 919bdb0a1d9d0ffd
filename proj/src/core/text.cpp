#include "letter/core/text.hpp"

#include <charconv>
#include <cmath>

#include "letter/core/error.hpp"

namespace letter::text {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
static T parse_number(std::string_view s, std::size_t line, const char* what) {
  s = trim(s);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(std::string("invalid ") + what + " '" + std::string(s) + "'", line);
  return v;
}

std::uint64_t parse_uint(std::string_view s, std::size_t line) {
  return parse_number<std::uint64_t>(s, line, "unsigned integer");
}

std::int64_t parse_int(std::string_view s, std::size_t line) {
  return parse_number<std::int64_t>(s, line, "integer");
}

double parse_double(std::string_view s, std::size_t line) {
  const double v = parse_number<double>(s, line, "number");
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(trim(s)) + "'", line);
  return v;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace letter::text
