#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hart::util {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

std::size_t parse_size(std::string_view s, std::string_view field);
std::int64_t parse_int(std::string_view s, std::string_view field);
std::uint64_t parse_u64(std::string_view s, std::string_view field);
double parse_double(std::string_view s, std::string_view field);
bool parse_bool(std::string_view s, std::string_view field);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace hart::util
