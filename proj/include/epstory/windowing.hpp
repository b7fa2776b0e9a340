#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "epstory/error.hpp"
#include "epstory/story.hpp"
#include "epstory/text.hpp"

namespace epstory {

enum class WindowUnit { Chars, WhitespaceTokens };

inline std::string_view to_string(WindowUnit u) {
    return u == WindowUnit::Chars ? "chars" : "whitespace_tokens";
}

inline std::optional<WindowUnit> parse_window_unit(std::string_view s) {
    if (s == "chars") return WindowUnit::Chars;
    if (s == "whitespace_tokens") return WindowUnit::WhitespaceTokens;
    return std::nullopt;
}

inline std::size_t measure(std::string_view text, WindowUnit unit) {
    return unit == WindowUnit::Chars ? utf8_length(text) : count_tokens(text);
}

struct Window {
    std::string sample_id;
    std::size_t index = 0;
    std::string text;  // lines joined by LF
    std::size_t unit_count = 0;

    bool operator==(const Window&) const = default;
};

struct WindowingOptions {
    WindowUnit unit = WindowUnit::WhitespaceTokens;
    std::size_t budget = 384;
};

/// Greedy line-aligned packing. A line that alone exceeds the budget becomes
/// a window by itself.
inline std::vector<Window> split_into_windows(std::span<const std::string> lines, std::string_view sample_id,
                                              const WindowingOptions& options = {}) {
    if (options.budget < 1) throw ArgumentError("window budget must be at least 1");
    std::vector<Window> windows;
    Window current;
    bool open = false;
    // Joining adds one LF between lines, which counts as a character but not a token.
    const std::size_t separator = options.unit == WindowUnit::Chars ? 1 : 0;

    auto flush = [&] {
        if (!open) return;
        current.sample_id = std::string(sample_id);
        current.index = windows.size();
        windows.push_back(std::move(current));
        current = Window{};
        open = false;
    };

    for (const auto& line : lines) {
        const std::size_t size = measure(line, options.unit);
        if (open && current.unit_count + separator + size <= options.budget) {
            current.text.push_back('\n');
            current.text += line;
            current.unit_count += separator + size;
            continue;
        }
        flush();
        current.text = line;
        current.unit_count = size;
        open = true;
    }
    flush();
    return windows;
}

inline std::vector<Window> split_into_windows(const EndpointStory& story, const WindowingOptions& options = {}) {
    return split_into_windows(story.lines, sample_id(story.meta), options);
}

/// Lines of a window, in order.
inline std::vector<std::string> window_lines(const Window& w) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (true) {
        auto end = w.text.find('\n', start);
        lines.push_back(w.text.substr(start, end == std::string::npos ? std::string::npos : end - start));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return lines;
}

// `.windows.jsonl`: one object per window.
inline ordered_json to_json(const Window& w) {
    ordered_json j;
    j["sample_id"] = w.sample_id;
    j["index"] = w.index;
    j["unit_count"] = w.unit_count;
    j["text"] = w.text;
    return j;
}

inline Window window_from_json(const ordered_json& j) {
    Window w;
    try {
        w.sample_id = j.at("sample_id").get<std::string>();
        w.index = j.at("index").get<std::size_t>();
        w.unit_count = j.at("unit_count").get<std::size_t>();
        w.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("window record: ") + e.what());
    }
    return w;
}

}  // namespace epstory
