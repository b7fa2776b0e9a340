#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace epstory {

/// Number of Unicode scalar values in UTF-8 text (continuation bytes are not counted).
inline std::size_t utf8_length(std::string_view s) noexcept {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

inline constexpr bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

/// Calls `fn(token)` for each maximal run of non-whitespace characters.
template <typename Fn>
void for_each_token(std::string_view s, Fn&& fn) {
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) fn(s.substr(start, i - start));
    }
}

inline std::size_t count_tokens(std::string_view s) noexcept {
    std::size_t n = 0;
    for_each_token(s, [&](std::string_view) { ++n; });
    return n;
}

inline std::vector<std::string_view> tokenize(std::string_view s) {
    std::vector<std::string_view> out;
    for_each_token(s, [&](std::string_view t) { out.push_back(t); });
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace epstory
