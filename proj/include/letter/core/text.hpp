#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Small parsing helpers shared by the text file readers.
namespace letter::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Parse failures raise ParseError tagged with `line`.
std::uint64_t parse_uint(std::string_view s, std::size_t line);
std::int64_t parse_int(std::string_view s, std::size_t line);
double parse_double(std::string_view s, std::size_t line);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace letter::text
