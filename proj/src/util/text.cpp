#include "hart/util/text.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace hart::util {
namespace {

[[noreturn]] void bad(std::string_view s, std::string_view field, const char* kind) {
    throw std::invalid_argument(std::string(field) + ": '" + std::string(s) + "' is not " +
                                kind);
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::size_t parse_size(std::string_view s, std::string_view field) {
    s = trim(s);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
        bad(s, field, "a non-negative integer");
    }
    return v;
}

std::int64_t parse_int(std::string_view s, std::string_view field) {
    s = trim(s);
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) bad(s, field, "an integer");
    return v;
}

std::uint64_t parse_u64(std::string_view s, std::string_view field) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
        bad(s, field, "a non-negative integer");
    }
    return v;
}

double parse_double(std::string_view s, std::string_view field) {
    s = trim(s);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) bad(s, field, "a number");
    return v;
}

bool parse_bool(std::string_view s, std::string_view field) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad(s, field, "a boolean");
}

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        out.emplace_back(s.substr(pos, next == std::string_view::npos ? s.size() - pos
                                                                       : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace hart::util
