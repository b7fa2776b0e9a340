#pragma once

#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "epstory/error.hpp"
#include "epstory/fileio.hpp"
#include "epstory/telemetry.hpp"

namespace epstory {

enum class FilterAction { Drop, Keep };

/// Conjunction of the conditions that are set. A rule with no conditions
/// matches every event.
struct FilterRule {
    FilterAction action = FilterAction::Keep;
    std::optional<EventClass> event_class;
    std::vector<std::string> event_types;  // any-of; empty = no constraint
    std::optional<std::string> has_detail;

    bool matches(const RawEvent& e) const {
        if (event_class && *event_class != e.event_class) return false;
        if (!event_types.empty() &&
            std::find(event_types.begin(), event_types.end(), e.event_type) == event_types.end())
            return false;
        if (has_detail) {
            bool found = std::any_of(e.details.begin(), e.details.end(),
                                     [&](const auto& kv) { return kv.first == *has_detail; });
            if (!found) return false;
        }
        return true;
    }
};

/// First matching rule wins; events matching no rule are kept.
struct FilterRuleSet {
    int version = 1;
    std::vector<FilterRule> rules;

    FilterAction decide(const RawEvent& e) const {
        for (const auto& r : rules)
            if (r.matches(e)) return r.action;
        return FilterAction::Keep;
    }
};

namespace detail {

inline FilterRuleSet parse_filter_rules_node(const YAML::Node& root) {
    FilterRuleSet set;
    if (!root || root.IsNull()) return set;
    if (!root.IsMap()) throw DataError("filter rules: top level must be a mapping");
    if (root["version"]) {
        set.version = root["version"].as<int>();
        if (set.version != 1) throw DataError("filter rules: unsupported version " + std::to_string(set.version));
    }
    auto rules = root["rules"];
    if (!rules || rules.IsNull()) return set;
    if (!rules.IsSequence()) throw DataError("filter rules: 'rules' must be a list");
    std::size_t index = 0;
    for (const auto& node : rules) {
        const std::string where = "filter rules: rule " + std::to_string(index++);
        if (!node.IsMap()) throw DataError(where + " must be a mapping");
        FilterRule rule;
        for (const auto& kv : node) {
            auto key = kv.first.as<std::string>();
            if (key != "action" && key != "event_class" && key != "event_type" && key != "has_detail")
                throw DataError(where + ": unknown key '" + key + "'");
        }
        if (!node["action"]) throw DataError(where + ": missing 'action'");
        auto action = node["action"].as<std::string>();
        if (action == "drop")
            rule.action = FilterAction::Drop;
        else if (action == "keep")
            rule.action = FilterAction::Keep;
        else
            throw DataError(where + ": action must be drop or keep, got '" + action + "'");
        if (node["event_class"]) {
            auto cls = parse_event_class(node["event_class"].as<std::string>());
            if (!cls) throw DataError(where + ": unknown event_class");
            rule.event_class = cls;
        }
        if (auto t = node["event_type"]) {
            if (t.IsSequence())
                for (const auto& item : t) rule.event_types.push_back(item.as<std::string>());
            else
                rule.event_types.push_back(t.as<std::string>());
        }
        if (node["has_detail"]) rule.has_detail = node["has_detail"].as<std::string>();
        set.rules.push_back(std::move(rule));
    }
    return set;
}

}  // namespace detail

/// Rule file schema:
///
///     version: 1
///     rules:
///       - action: drop                 # drop | keep
///         event_class: Telemetry       # optional
///         event_type: Heartbeat        # optional; string or list of strings
///         has_detail: cmdline          # optional; detail key that must be present
inline FilterRuleSet parse_filter_rules(const std::string& text) {
    try {
        return detail::parse_filter_rules_node(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw DataError(std::string("filter rules: ") + e.what());
    }
}

inline FilterRuleSet load_filter_rules(const fs::path& path) { return parse_filter_rules(read_file(path)); }

}  // namespace epstory
