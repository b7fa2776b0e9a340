#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "epstory/error.hpp"
#include "epstory/fileio.hpp"
#include "epstory/time.hpp"

namespace epstory {

using ordered_json = nlohmann::ordered_json;

enum class EventClass { Telemetry, SecurityObservation, MlObservation };

enum class Label { Benign, Hok, Unlabeled };

inline std::string_view to_string(EventClass c) {
    switch (c) {
        case EventClass::Telemetry: return "Telemetry";
        case EventClass::SecurityObservation: return "SecurityObservation";
        case EventClass::MlObservation: return "MlObservation";
    }
    return "Telemetry";
}

inline std::optional<EventClass> parse_event_class(std::string_view s) {
    if (s == "Telemetry") return EventClass::Telemetry;
    if (s == "SecurityObservation") return EventClass::SecurityObservation;
    if (s == "MlObservation") return EventClass::MlObservation;
    return std::nullopt;
}

inline std::string_view to_string(Label l) {
    switch (l) {
        case Label::Benign: return "benign";
        case Label::Hok: return "hok";
        case Label::Unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

inline std::optional<Label> parse_label(std::string_view s) {
    if (s == "benign") return Label::Benign;
    if (s == "hok") return Label::Hok;
    if (s == "unlabeled") return Label::Unlabeled;
    return std::nullopt;
}

/// Ordered key/value pairs; order is significant for rendering.
using DetailMap = std::vector<std::pair<std::string, std::string>>;

struct RawEvent {
    std::string event_id;
    std::string machine_id;
    Timestamp timestamp;
    EventClass event_class = EventClass::Telemetry;
    std::string event_type;
    std::string user;
    std::string source;
    std::optional<std::string> parent_ref;
    DetailMap details;
    std::optional<double> score;

    bool operator==(const RawEvent&) const = default;
};

struct SampleMeta {
    std::string machine_id;
    Timestamp timeframe_start;
    Timestamp timeframe_end;
    Label label = Label::Unlabeled;
    std::string trigger;

    bool operator==(const SampleMeta&) const = default;
};

/// `machine_id` + timeframe key; unique per sample and filename-safe for
/// anonymized machine ids.
inline std::string sample_id(const SampleMeta& meta) {
    return meta.machine_id + "_" + format_compact(meta.timeframe_start);
}

struct ParsedSample {
    SampleMeta meta;
    std::vector<RawEvent> events;
};

enum class FindingKind { DuplicateId, OutOfRange, ScorePresence, ScoreRange, MachineMismatch, BadTimeframe };

inline std::string_view to_string(FindingKind k) {
    switch (k) {
        case FindingKind::DuplicateId: return "DuplicateId";
        case FindingKind::OutOfRange: return "OutOfRange";
        case FindingKind::ScorePresence: return "ScorePresence";
        case FindingKind::ScoreRange: return "ScoreRange";
        case FindingKind::MachineMismatch: return "MachineMismatch";
        case FindingKind::BadTimeframe: return "BadTimeframe";
    }
    return "?";
}

struct Finding {
    FindingKind kind;
    std::string event_id;  // empty for sample-level findings

    bool operator==(const Finding&) const = default;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool ok() const noexcept { return findings.empty(); }

    std::string describe() const {
        std::string out;
        for (const auto& f : findings) {
            if (!out.empty()) out += "; ";
            out += to_string(f.kind);
            if (!f.event_id.empty()) out += " " + f.event_id;
        }
        return out;
    }
};

/// Checks every RawEvent/SampleMeta invariant. Findings are listed in event
/// order, sample-level findings first.
inline ValidationReport validate_sample(const std::vector<RawEvent>& events, const SampleMeta& meta) {
    ValidationReport report;
    if (!(meta.timeframe_start < meta.timeframe_end)) report.findings.push_back({FindingKind::BadTimeframe, ""});
    std::unordered_set<std::string_view> seen;
    seen.reserve(events.size());
    for (const auto& e : events) {
        if (!seen.insert(e.event_id).second) report.findings.push_back({FindingKind::DuplicateId, e.event_id});
        if (e.timestamp < meta.timeframe_start || meta.timeframe_end < e.timestamp)
            report.findings.push_back({FindingKind::OutOfRange, e.event_id});
        if (e.score.has_value() != (e.event_class == EventClass::MlObservation))
            report.findings.push_back({FindingKind::ScorePresence, e.event_id});
        else if (e.score && !(*e.score >= 0.0 && *e.score <= 1.0))
            report.findings.push_back({FindingKind::ScoreRange, e.event_id});
        if (e.machine_id != meta.machine_id) report.findings.push_back({FindingKind::MachineMismatch, e.event_id});
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON-lines sample format

inline ordered_json to_json(const SampleMeta& m) {
    ordered_json j;
    j["machine_id"] = m.machine_id;
    j["timeframe_start"] = format_rfc3339(m.timeframe_start);
    j["timeframe_end"] = format_rfc3339(m.timeframe_end);
    j["label"] = to_string(m.label);
    j["trigger"] = m.trigger;
    return j;
}

inline ordered_json to_json(const RawEvent& e) {
    ordered_json j;
    j["event_id"] = e.event_id;
    j["machine_id"] = e.machine_id;
    j["timestamp"] = format_rfc3339(e.timestamp);
    j["event_class"] = to_string(e.event_class);
    j["event_type"] = e.event_type;
    j["user"] = e.user;
    j["source"] = e.source;
    if (e.parent_ref) j["parent_ref"] = *e.parent_ref;
    ordered_json details = ordered_json::object();
    for (const auto& [k, v] : e.details) details[k] = v;
    j["details"] = std::move(details);
    if (e.score) j["score"] = *e.score;
    return j;
}

namespace detail {

inline const ordered_json& require(const ordered_json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line, std::string("missing field '") + key + "'");
    return *it;
}

inline std::string require_string(const ordered_json& obj, const char* key, std::size_t line) {
    const auto& v = require(obj, key, line);
    if (!v.is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

inline Timestamp require_time(const ordered_json& obj, const char* key, std::size_t line) {
    auto text = require_string(obj, key, line);
    auto t = parse_rfc3339(text);
    if (!t) throw ParseError(line, std::string("field '") + key + "' is not an RFC 3339 UTC timestamp: " + text);
    return *t;
}

inline std::string optional_string(const ordered_json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (!it->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

inline ordered_json parse_object(std::string_view text, std::size_t line) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    return j;
}

}  // namespace detail

inline SampleMeta parse_sample_header(std::string_view text, std::size_t line = 1) {
    auto j = detail::parse_object(text, line);
    SampleMeta m;
    m.machine_id = detail::require_string(j, "machine_id", line);
    m.timeframe_start = detail::require_time(j, "timeframe_start", line);
    m.timeframe_end = detail::require_time(j, "timeframe_end", line);
    auto label = detail::require_string(j, "label", line);
    auto parsed = parse_label(label);
    if (!parsed) throw ParseError(line, "unknown label '" + label + "'");
    m.label = *parsed;
    m.trigger = detail::optional_string(j, "trigger", line);
    if (!(m.timeframe_start < m.timeframe_end)) throw ParseError(line, "timeframe_start must precede timeframe_end");
    return m;
}

inline RawEvent parse_event(std::string_view text, std::size_t line) {
    auto j = detail::parse_object(text, line);
    RawEvent e;
    e.event_id = detail::require_string(j, "event_id", line);
    e.machine_id = detail::require_string(j, "machine_id", line);
    e.timestamp = detail::require_time(j, "timestamp", line);
    auto cls = detail::require_string(j, "event_class", line);
    auto parsed = parse_event_class(cls);
    if (!parsed) throw ParseError(line, "event " + e.event_id + ": unknown event_class '" + cls + "'");
    e.event_class = *parsed;
    e.event_type = detail::require_string(j, "event_type", line);
    e.user = detail::optional_string(j, "user", line);
    e.source = detail::optional_string(j, "source", line);
    if (auto it = j.find("parent_ref"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw ParseError(line, "event " + e.event_id + ": parent_ref must be a string");
        e.parent_ref = it->get<std::string>();
    }
    if (auto it = j.find("details"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw ParseError(line, "event " + e.event_id + ": details must be an object");
        for (auto d = it->begin(); d != it->end(); ++d) {
            if (!d.value().is_string())
                throw ParseError(line, "event " + e.event_id + ": detail '" + d.key() + "' must be a string");
            e.details.emplace_back(d.key(), d.value().get<std::string>());
        }
    }
    if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw ParseError(line, "event " + e.event_id + ": score must be a number");
        e.score = it->get<double>();
    }
    if (e.event_class == EventClass::MlObservation && !e.score)
        throw ParseError(line, "event " + e.event_id + ": MlObservation requires a score");
    if (e.event_class != EventClass::MlObservation && e.score)
        throw ParseError(line, "event " + e.event_id + ": score is only allowed on MlObservation");
    if (e.score && !(*e.score >= 0.0 && *e.score <= 1.0))
        throw ParseError(line, "event " + e.event_id + ": score outside [0,1]");
    return e;
}

/// Parses a `.evts.jsonl` sample: header line, then one event per line.
/// Blank lines are ignored. Throws ParseError for malformed lines and
/// ValidationError when the sample as a whole breaks an invariant.
inline ParsedSample parse_event_stream(std::string_view input) {
    ParsedSample sample;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < input.size()) {
        auto end = input.find('\n', start);
        if (end == std::string_view::npos) end = input.size();
        std::string_view line = input.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        if (!have_header) {
            sample.meta = parse_sample_header(line, line_no);
            have_header = true;
        } else {
            sample.events.push_back(parse_event(line, line_no));
        }
    }
    if (!have_header) throw ParseError(1, "missing sample header");
    auto report = validate_sample(sample.events, sample.meta);
    if (!report.ok()) throw ValidationError("sample " + sample_id(sample.meta) + ": " + report.describe());
    return sample;
}

/// Canonical serialization; `serialize_sample(parse_event_stream(x))` is the
/// canonical form of x.
inline std::string serialize_sample(const SampleMeta& meta, const std::vector<RawEvent>& events) {
    std::string out = to_json(meta).dump();
    out.push_back('\n');
    for (const auto& e : events) {
        out += to_json(e).dump();
        out.push_back('\n');
    }
    return out;
}

inline ParsedSample load_sample(const fs::path& path) {
    try {
        return parse_event_stream(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.filename().string() + ": " + e.what());
    }
}

}  // namespace epstory
