#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "epstory/filter_rules.hpp"
#include "epstory/telemetry.hpp"
#include "epstory/text.hpp"

namespace epstory {

/// Position of a piece of evidence in the compiled story. `sequence` is the
/// event's position after aggregation, so it follows input order among equal
/// timestamps.
struct OrderKey {
    Timestamp timestamp;
    std::size_t sequence = 0;

    auto operator<=>(const OrderKey&) const = default;
};

struct Evidence {
    OrderKey order_key;
    std::string user;
    std::string kind;
    std::string source;
    std::string detail_text;
    std::size_t group_count = 1;
    std::vector<std::string> provenance;
    /// Structured details behind `detail_text`; their keys decide entity classes.
    DetailMap fields;

    bool operator==(const Evidence&) const = default;
};

enum class EntityClass { File, Proc, Reg, User, Host };

inline constexpr std::array<EntityClass, 5> kEntityClasses{EntityClass::File, EntityClass::Proc, EntityClass::Reg,
                                                          EntityClass::User, EntityClass::Host};

inline std::string_view to_string(EntityClass c) {
    switch (c) {
        case EntityClass::File: return "FILE";
        case EntityClass::Proc: return "PROC";
        case EntityClass::Reg: return "REG";
        case EntityClass::User: return "USER";
        case EntityClass::Host: return "HOST";
    }
    return "FILE";
}

/// Entity class implied by a detail key, if any.
inline std::optional<EntityClass> entity_class_for_key(std::string_view key) {
    static const std::map<std::string_view, EntityClass> table{
        {"path", EntityClass::File},         {"file", EntityClass::File},
        {"file_path", EntityClass::File},    {"target_path", EntityClass::File},
        {"src_path", EntityClass::File},     {"dst_path", EntityClass::File},
        {"dll", EntityClass::File},          {"script", EntityClass::File},
        {"image", EntityClass::Proc},        {"parent_image", EntityClass::Proc},
        {"process", EntityClass::Proc},      {"process_image", EntityClass::Proc},
        {"key", EntityClass::Reg},           {"registry_key", EntityClass::Reg},
        {"reg_key", EntityClass::Reg},       {"target_user", EntityClass::User},
        {"account", EntityClass::User},      {"user", EntityClass::User},
        {"host", EntityClass::Host},         {"hostname", EntityClass::Host},
        {"target_host", EntityClass::Host},  {"remote_host", EntityClass::Host},
        {"workstation", EntityClass::Host},
    };
    auto it = table.find(key);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

/// Bijective placeholder legend, kept in first-occurrence order.
class EntityTable {
public:
    using Entry = std::pair<std::string, std::string>;  // placeholder, original

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t size() const noexcept { return entries_.size(); }

    const std::string* original_for(std::string_view placeholder) const {
        auto it = by_placeholder_.find(std::string(placeholder));
        return it == by_placeholder_.end() ? nullptr : &entries_[it->second].second;
    }

    const std::string* placeholder_for(std::string_view original) const {
        auto it = by_original_.find(std::string(original));
        return it == by_original_.end() ? nullptr : &entries_[it->second].first;
    }

    /// Throws if either side is already present.
    void add(std::string placeholder, std::string original) {
        if (by_placeholder_.count(placeholder) || by_original_.count(original))
            throw DataError("entity table: duplicate entry for " + placeholder);
        by_placeholder_.emplace(placeholder, entries_.size());
        by_original_.emplace(original, entries_.size());
        entries_.emplace_back(std::move(placeholder), std::move(original));
    }

    bool operator==(const EntityTable& o) const { return entries_ == o.entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> by_placeholder_;
    std::unordered_map<std::string, std::size_t> by_original_;
};

struct EndpointStory {
    SampleMeta meta;
    std::vector<std::string> lines;
    EntityTable legend;
};

struct StoryOptions {
    /// Entities strictly longer than this many characters are enumerated.
    std::size_t entity_length_threshold = 12;
};

// ---------------------------------------------------------------------------
// Stage 1: aggregation

/// Stable sort by timestamp.
inline std::vector<RawEvent> aggregate(std::vector<RawEvent> events) {
    std::stable_sort(events.begin(), events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });
    return events;
}

// ---------------------------------------------------------------------------
// Stage 2: filtering

inline std::vector<RawEvent> filter(std::vector<RawEvent> events, const FilterRuleSet& rules) {
    std::erase_if(events, [&](const RawEvent& e) { return rules.decide(e) == FilterAction::Drop; });
    return events;
}

// ---------------------------------------------------------------------------
// Stage 3: rephrasing

namespace detail {

inline std::string single_line(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\n')
            out += "\\n";
        else if (c == '\r')
            out += "\\r";
        else
            out.push_back(c);
    }
    return out;
}

inline std::string format_score(double score) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, score, std::chars_format::fixed, 3);
    return std::string(buf, p);
}

}  // namespace detail

inline constexpr std::string_view kUnknownUser = "unknown-user";
inline constexpr std::string_view kUnknownSource = "unknown-source";

/// Renders an event as evidence: user, then kind and source, then details as
/// `key=value` pairs in map order, then `score=x.xxx` for ML observations.
inline Evidence rephrase(const RawEvent& event, std::size_t sequence = 0) {
    Evidence ev;
    ev.order_key = {event.timestamp, sequence};
    ev.user = event.user.empty() ? std::string(kUnknownUser) : detail::single_line(event.user);
    ev.kind = detail::single_line(event.event_type);
    ev.source = event.source.empty() ? std::string(kUnknownSource) : detail::single_line(event.source);
    std::string text;
    for (const auto& [k, v] : event.details) {
        if (!text.empty()) text.push_back(' ');
        text += detail::single_line(k);
        text.push_back('=');
        text += detail::single_line(v);
    }
    if (event.event_class == EventClass::MlObservation && event.score) {
        if (!text.empty()) text.push_back(' ');
        text += "score=" + detail::format_score(*event.score);
    }
    ev.detail_text = std::move(text);
    ev.provenance.push_back(event.event_id);
    ev.fields = event.details;
    return ev;
}

// ---------------------------------------------------------------------------
// Stage 4: deduplication

/// Merges evidence sharing (second bucket, user, kind, source). The merged
/// item keeps the first member's position and details.
inline std::vector<Evidence> deduplicate(const std::vector<Evidence>& evidence) {
    std::vector<Evidence> out;
    out.reserve(evidence.size());
    std::size_t i = 0;
    while (i < evidence.size()) {
        const auto bucket = evidence[i].order_key.timestamp.second_bucket();
        std::size_t j = i;
        while (j < evidence.size() && evidence[j].order_key.timestamp.second_bucket() == bucket) ++j;

        std::vector<Evidence> groups;
        std::vector<std::size_t> first_counts;
        for (std::size_t k = i; k < j; ++k) {
            const auto& e = evidence[k];
            auto it = std::find_if(groups.begin(), groups.end(), [&](const Evidence& g) {
                return g.user == e.user && g.kind == e.kind && g.source == e.source;
            });
            if (it == groups.end()) {
                groups.push_back(e);
                first_counts.push_back(e.group_count);
            } else {
                it->group_count += e.group_count;
                it->provenance.insert(it->provenance.end(), e.provenance.begin(), e.provenance.end());
            }
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (groups[g].group_count != first_counts[g])
                groups[g].detail_text += " (x" + std::to_string(groups[g].group_count) + " similar)";
            out.push_back(std::move(groups[g]));
        }
        i = j;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 5: normalization

namespace detail {

/// Parses `<CLASS_N>` at the start of `s`; returns its length or 0.
inline std::size_t placeholder_length(std::string_view s) {
    if (s.size() < 4 || s[0] != '<') return 0;
    std::size_t i = 1;
    while (i < s.size() && s[i] >= 'A' && s[i] <= 'Z') ++i;
    if (i == 1 || i >= s.size() || s[i] != '_') return 0;
    std::size_t digits_start = ++i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    if (i == digits_start || i >= s.size() || s[i] != '>') return 0;
    return i + 1;
}

inline void collect_placeholder_lookalikes(std::string_view s, std::set<std::string>& out) {
    for (std::size_t pos = s.find('<'); pos != std::string_view::npos; pos = s.find('<', pos + 1))
        if (auto len = placeholder_length(s.substr(pos))) out.emplace(s.substr(pos, len));
}

/// Longest-match substitution of known entities, scanning left to right.
/// Entities are bucketed by their first kPrefix bytes; each bucket keeps the
/// distinct entity lengths it holds, longest first. Shorter entities are
/// looked up by length.
class EntityMatcher {
public:
    static constexpr std::size_t kPrefix = 8;

    void add(const std::string& entity, EntityClass cls) {
        if (!classes_.emplace(entity, cls).second) return;
        first_byte_[static_cast<unsigned char>(entity[0])] = true;
        if (entity.size() < kPrefix) {
            short_lengths_.insert(entity.size());
            return;
        }
        auto& lengths = by_prefix_[entity.substr(0, kPrefix)];
        auto it = std::lower_bound(lengths.begin(), lengths.end(), entity.size(), std::greater<>());
        if (it == lengths.end() || *it != entity.size()) lengths.insert(it, entity.size());
    }

    /// Longest entity starting at `text[pos]`, or nullptr.
    const std::string* match(std::string_view text, std::size_t pos) const {
        const std::size_t left = text.size() - pos;
        if (!first_byte_[static_cast<unsigned char>(text[pos])]) return nullptr;
        if (left >= kPrefix)
            if (auto bucket = by_prefix_.find(std::string(text.substr(pos, kPrefix))); bucket != by_prefix_.end())
                for (auto len : bucket->second) {
                    if (len > left) continue;
                    if (auto it = classes_.find(std::string(text.substr(pos, len))); it != classes_.end())
                        return &it->first;
                }
        for (auto len : short_lengths_) {
            if (len > left) continue;
            if (auto it = classes_.find(std::string(text.substr(pos, len))); it != classes_.end()) return &it->first;
        }
        return nullptr;
    }

    EntityClass class_of(const std::string& entity) const { return classes_.at(entity); }

private:
    std::unordered_map<std::string, EntityClass> classes_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_prefix_;
    std::set<std::size_t, std::greater<>> short_lengths_;  // entities shorter than kPrefix
    std::array<bool, 256> first_byte_{};
};

}  // namespace detail

/// Replaces long entity strings (file paths, process images, registry keys,
/// user and host names, recognized through the detail key they appear under)
/// with `<CLASS_N>` placeholders wherever they occur in user, source or detail
/// text. Numbers are assigned per class in textual first-occurrence order.
/// A number whose placeholder already appears literally in the input is
/// skipped so that `denormalize` stays an exact inverse.
inline std::pair<std::vector<Evidence>, EntityTable> normalize(std::vector<Evidence> evidence, EntityTable legend = {},
                                                               const StoryOptions& options = {}) {
    const auto long_enough = [&](const std::string& s) { return utf8_length(s) > options.entity_length_threshold; };

    std::set<std::string> reserved;
    for (const auto& [placeholder, original] : legend.entries()) reserved.insert(placeholder);
    detail::EntityMatcher matcher;
    for (const auto& [placeholder, original] : legend.entries()) {
        auto cls_name = std::string_view(placeholder).substr(1, placeholder.find('_') - 1);
        for (auto c : kEntityClasses)
            if (to_string(c) == cls_name) matcher.add(original, c);
    }
    for (const auto& e : evidence) {
        detail::collect_placeholder_lookalikes(e.user, reserved);
        detail::collect_placeholder_lookalikes(e.source, reserved);
        detail::collect_placeholder_lookalikes(e.detail_text, reserved);
        // The unknown-user/unknown-source fillers are not entities.
        if (long_enough(e.user) && e.user != kUnknownUser) matcher.add(e.user, EntityClass::User);
        if (long_enough(e.source) && e.source != kUnknownSource) matcher.add(e.source, EntityClass::Proc);
        for (const auto& [key, value] : e.fields)
            if (auto cls = entity_class_for_key(key); cls && long_enough(value)) matcher.add(value, *cls);
    }

    std::map<EntityClass, std::size_t> counters;
    const auto next_placeholder = [&](EntityClass cls) {
        auto& n = counters[cls];
        std::string p;
        do {
            p = "<" + std::string(to_string(cls)) + "_" + std::to_string(++n) + ">";
        } while (reserved.count(p));
        return p;
    };

    const auto rewrite = [&](std::string& text) {
        std::string out;
        out.reserve(text.size());
        std::size_t pos = 0;
        while (pos < text.size()) {
            if (const std::string* entity = matcher.match(text, pos)) {
                const std::string* placeholder = legend.placeholder_for(*entity);
                if (!placeholder) {
                    legend.add(next_placeholder(matcher.class_of(*entity)), *entity);
                    placeholder = legend.placeholder_for(*entity);
                }
                out += *placeholder;
                pos += entity->size();
            } else {
                out.push_back(text[pos++]);
            }
        }
        text = std::move(out);
    };

    for (auto& e : evidence) {
        rewrite(e.user);
        rewrite(e.source);
        rewrite(e.detail_text);
    }
    return {std::move(evidence), std::move(legend)};
}

/// Substitutes legend placeholders back into text.
inline std::string denormalize_text(std::string_view text, const EntityTable& legend) {
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        if (text[pos] == '<') {
            if (auto len = detail::placeholder_length(text.substr(pos))) {
                if (const std::string* original = legend.original_for(text.substr(pos, len))) {
                    out += *original;
                    pos += len;
                    continue;
                }
            }
        }
        out.push_back(text[pos++]);
    }
    return out;
}

inline std::vector<Evidence> denormalize(std::vector<Evidence> evidence, const EntityTable& legend) {
    for (auto& e : evidence) {
        e.user = denormalize_text(e.user, legend);
        e.source = denormalize_text(e.source, legend);
        e.detail_text = denormalize_text(e.detail_text, legend);
    }
    return evidence;
}

// ---------------------------------------------------------------------------
// Full compilation

/// `[{user}] {kind} via {source}: {detail_text}`
inline std::string render_line(const Evidence& e) {
    std::string line;
    line.reserve(e.user.size() + e.kind.size() + e.source.size() + e.detail_text.size() + 10);
    line += '[';
    line += e.user;
    line += "] ";
    line += e.kind;
    line += " via ";
    line += e.source;
    line += ": ";
    line += e.detail_text;
    return line;
}

/// aggregate -> filter -> rephrase -> deduplicate -> normalize.
inline std::pair<std::vector<Evidence>, EntityTable> compile_evidence(std::vector<RawEvent> events,
                                                                      const FilterRuleSet& rules,
                                                                      const StoryOptions& options = {}) {
    auto kept = filter(aggregate(std::move(events)), rules);
    std::vector<Evidence> evidence;
    evidence.reserve(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) evidence.push_back(rephrase(kept[i], i));
    return normalize(deduplicate(evidence), {}, options);
}

inline EndpointStory compile_story(std::vector<RawEvent> events, const SampleMeta& meta, const FilterRuleSet& rules,
                                   const StoryOptions& options = {}) {
    auto [evidence, legend] = compile_evidence(std::move(events), rules, options);
    EndpointStory story;
    story.meta = meta;
    story.lines.reserve(evidence.size());
    for (const auto& e : evidence) story.lines.push_back(render_line(e));
    story.legend = std::move(legend);
    return story;
}

// ---------------------------------------------------------------------------
// Story files: `<id>.story.txt` (LF-terminated lines) and `<id>.legend.json`

inline std::string story_text(const EndpointStory& story) {
    std::string out;
    for (const auto& line : story.lines) {
        out += line;
        out.push_back('\n');
    }
    return out;
}

inline ordered_json legend_json(const EntityTable& legend) {
    ordered_json j = ordered_json::object();
    for (const auto& [placeholder, original] : legend.entries()) j[placeholder] = original;
    return j;
}

inline EntityTable legend_from_json(const ordered_json& j) {
    if (!j.is_object()) throw DataError("legend must be a JSON object");
    EntityTable legend;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_string()) throw DataError("legend value for " + it.key() + " must be a string");
        legend.add(it.key(), it.value().get<std::string>());
    }
    return legend;
}

}  // namespace epstory
