#include <gtest/gtest.h>

#include "epstory/filter_rules.hpp"
#include "epstory/pipeline.hpp"
#include "support.hpp"

using namespace epstory;

namespace {

RawEvent ev(EventClass cls, std::string type, DetailMap details = {}) {
    RawEvent e;
    e.event_id = "x";
    e.machine_id = "m";
    e.event_class = cls;
    e.event_type = std::move(type);
    e.details = std::move(details);
    return e;
}

}  // namespace

TEST(FilterRules, FirstMatchWinsAndDefaultKeeps) {
    auto rules = parse_filter_rules(R"(
version: 1
rules:
  - action: keep
    event_type: ImageLoad
    has_detail: suspicious
  - action: drop
    event_type: [Heartbeat, ImageLoad]
  - action: drop
    event_class: Telemetry
    has_detail: noise
)");
    ASSERT_EQ(rules.rules.size(), 3u);
    EXPECT_EQ(rules.decide(ev(EventClass::Telemetry, "ImageLoad", {{"suspicious", "1"}})), FilterAction::Keep);
    EXPECT_EQ(rules.decide(ev(EventClass::Telemetry, "ImageLoad")), FilterAction::Drop);
    EXPECT_EQ(rules.decide(ev(EventClass::SecurityObservation, "Heartbeat")), FilterAction::Drop);
    EXPECT_EQ(rules.decide(ev(EventClass::Telemetry, "FileCreate", {{"noise", ""}})), FilterAction::Drop);
    EXPECT_EQ(rules.decide(ev(EventClass::SecurityObservation, "FileCreate", {{"noise", ""}})), FilterAction::Keep);
    EXPECT_EQ(rules.decide(ev(EventClass::Telemetry, "FileCreate")), FilterAction::Keep);
}

TEST(FilterRules, EmptyRuleMatchesEverything) {
    auto rules = parse_filter_rules("rules:\n  - action: drop\n");
    EXPECT_EQ(rules.decide(ev(EventClass::MlObservation, "Anything")), FilterAction::Drop);
    EXPECT_TRUE(parse_filter_rules("").rules.empty());
    EXPECT_TRUE(parse_filter_rules("version: 1\n").rules.empty());
}

TEST(FilterRules, RejectsBadSchemas) {
    for (const char* bad : {
             "- a\n- b\n",
             "version: 2\nrules: []\n",
             "rules: {}\n",
             "rules:\n  - event_type: X\n",
             "rules:\n  - action: maybe\n",
             "rules:\n  - action: drop\n    event_class: Nope\n",
             "rules:\n  - action: drop\n    colour: red\n",
             "rules:\n  - action: drop\n  - 3\n",
             "rules: [\n",
         })
        EXPECT_THROW(parse_filter_rules(bad), DataError) << bad;
}

TEST(FilterRules, BundledFileMatchesBuiltInDefault) {
    auto from_file = load_filter_rules(testsupport::source_dir() / "configs" / "filter_rules.yaml");
    auto builtin = parse_filter_rules(std::string(kDefaultFilterRules));
    Rng rng(9);
    for (int i = 0; i < 500; ++i) {
        auto e = testsupport::random_event(rng, 0, Timestamp{0});
        EXPECT_EQ(from_file.decide(e), builtin.decide(e));
    }
    EXPECT_EQ(builtin.decide(ev(EventClass::Telemetry, "Heartbeat")), FilterAction::Drop);
    EXPECT_EQ(builtin.decide(ev(EventClass::SecurityObservation, "Heartbeat")), FilterAction::Keep);
}

TEST(FilterRules, MissingFileIsAnIoError) {
    EXPECT_THROW(load_filter_rules("/nonexistent/rules.yaml"), IoError);
}
