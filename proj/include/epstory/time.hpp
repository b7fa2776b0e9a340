#pragma once

#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace epstory {

/// UTC instant with millisecond precision, stored as milliseconds since the Unix epoch.
struct Timestamp {
    std::int64_t ms = 0;

    constexpr auto operator<=>(const Timestamp&) const = default;

    constexpr std::int64_t second_bucket() const noexcept {
        return ms >= 0 ? ms / 1000 : -((-ms + 999) / 1000);
    }
};

namespace detail {

inline bool parse_fixed_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline void append_padded(std::string& out, long long v, int width) {
    char buf[24];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    for (int pad = width - static_cast<int>(p - buf); pad > 0; --pad) out.push_back('0');
    out.append(buf, p);
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM:SS[.fraction](Z|+00:00)`. Fractions beyond
/// milliseconds are truncated. Non-UTC offsets are rejected.
inline std::optional<Timestamp> parse_rfc3339(std::string_view s) {
    using namespace std::chrono;
    if (s.size() < 20) return std::nullopt;
    if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't') || s[13] != ':' || s[16] != ':')
        return std::nullopt;
    int y, mo, d, h, mi, sec;
    if (!detail::parse_fixed_int(s.substr(0, 4), y) || !detail::parse_fixed_int(s.substr(5, 2), mo) ||
        !detail::parse_fixed_int(s.substr(8, 2), d) || !detail::parse_fixed_int(s.substr(11, 2), h) ||
        !detail::parse_fixed_int(s.substr(14, 2), mi) || !detail::parse_fixed_int(s.substr(17, 2), sec))
        return std::nullopt;
    if (h > 23 || mi > 59 || sec > 59) return std::nullopt;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;

    std::size_t pos = 19;
    int millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 3) millis = millis * 10 + (s[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0 || digits > 9) return std::nullopt;
        for (std::size_t k = digits; k < 3; ++k) millis *= 10;
    }
    std::string_view zone = s.substr(pos);
    if (zone != "Z" && zone != "z" && zone != "+00:00") return std::nullopt;

    auto days = sys_days{ymd}.time_since_epoch().count();
    std::int64_t total = static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec;
    return Timestamp{total * 1000 + millis};
}

/// Canonical form: `YYYY-MM-DDTHH:MM:SS.mmmZ`.
inline std::string format_rfc3339(Timestamp t) {
    using namespace std::chrono;
    std::int64_t ms = t.ms;
    std::int64_t secs = ms >= 0 ? ms / 1000 : -((-ms + 999) / 1000);
    int millis = static_cast<int>(ms - secs * 1000);
    std::int64_t days = secs >= 0 ? secs / 86400 : -((-secs + 86399) / 86400);
    std::int64_t rem = secs - days * 86400;
    year_month_day ymd{sys_days{std::chrono::days{days}}};

    std::string out;
    out.reserve(24);
    detail::append_padded(out, static_cast<int>(ymd.year()), 4);
    out.push_back('-');
    detail::append_padded(out, static_cast<unsigned>(ymd.month()), 2);
    out.push_back('-');
    detail::append_padded(out, static_cast<unsigned>(ymd.day()), 2);
    out.push_back('T');
    detail::append_padded(out, rem / 3600, 2);
    out.push_back(':');
    detail::append_padded(out, (rem / 60) % 60, 2);
    out.push_back(':');
    detail::append_padded(out, rem % 60, 2);
    out.push_back('.');
    detail::append_padded(out, millis, 3);
    out.push_back('Z');
    return out;
}

/// `YYYYMMDDTHHMMSSZ`, used inside sample identifiers and filenames.
inline std::string format_compact(Timestamp t) {
    std::string full = format_rfc3339(t);
    std::string out;
    for (std::size_t i = 0; i < 19; ++i)
        if (full[i] != '-' && full[i] != ':') out.push_back(full[i]);
    out.push_back('Z');
    return out;
}

}  // namespace epstory
