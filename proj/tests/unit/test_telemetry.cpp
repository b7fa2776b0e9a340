#include <gtest/gtest.h>

#include "epstory/telemetry.hpp"
#include "support.hpp"

using namespace epstory;

namespace {

const char* kHeader =
    R"({"machine_id":"m1","timeframe_start":"2024-01-01T00:00:00.000Z","timeframe_end":"2024-01-01T06:00:00.000Z","label":"hok","trigger":"t"})";

std::string event_line(const std::string& id, const std::string& extra = "") {
    return R"({"event_id":")" + id +
           R"(","machine_id":"m1","timestamp":"2024-01-01T00:00:01.000Z","event_class":"Telemetry","event_type":"ProcessCreate")" +
           extra + "}";
}

}  // namespace

TEST(Telemetry, ParsesHeaderAndEvents) {
    std::string text = std::string(kHeader) + "\n" + event_line("a", R"(,"user":"alice","details":{"b":"2","a":"1"})") +
                       "\n\n" +
                       R"({"event_id":"b","machine_id":"m1","timestamp":"2024-01-01T00:00:02Z","event_class":"MlObservation","event_type":"X","score":0.25})" +
                       "\r\n";
    auto s = parse_event_stream(text);
    EXPECT_EQ(s.meta.machine_id, "m1");
    EXPECT_EQ(s.meta.label, Label::Hok);
    EXPECT_EQ(sample_id(s.meta), "m1_20240101T000000Z");
    ASSERT_EQ(s.events.size(), 2u);
    EXPECT_EQ(s.events[0].user, "alice");
    // Detail order is the file's order, not sorted.
    ASSERT_EQ(s.events[0].details.size(), 2u);
    EXPECT_EQ(s.events[0].details[0].first, "b");
    EXPECT_FALSE(s.events[0].score);
    EXPECT_EQ(s.events[1].event_class, EventClass::MlObservation);
    EXPECT_DOUBLE_EQ(*s.events[1].score, 0.25);
}

TEST(Telemetry, SerializationIsCanonical) {
    std::string text = std::string(kHeader) + "\n" + event_line("a", R"(,"details":{"k":"v"},"parent_ref":"p")") + "\n";
    auto s = parse_event_stream(text);
    auto canon = serialize_sample(s.meta, s.events);
    auto again = parse_event_stream(canon);
    EXPECT_EQ(again.meta, s.meta);
    EXPECT_EQ(again.events, s.events);
    EXPECT_EQ(serialize_sample(again.meta, again.events), canon);
}

TEST(Telemetry, RandomEventsRoundTrip) {
    Rng rng(5);
    SampleMeta meta;
    meta.machine_id = "m1";
    meta.timeframe_start = Timestamp{1'704'067'200'000};
    meta.timeframe_end = Timestamp{1'704'067'200'000 + 3600'000};
    meta.label = Label::Benign;
    for (int i = 0; i < 200; ++i) {
        auto events = testsupport::random_events(rng);
        auto parsed = parse_event_stream(serialize_sample(meta, events));
        ASSERT_EQ(parsed.events, events);
    }
}

TEST(Telemetry, EmptyInputHasNoHeader) {
    try {
        parse_event_stream("");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("missing sample header"), std::string::npos);
    }
}

TEST(Telemetry, ParseErrorsCarryLineNumbers) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_event_stream(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    const std::string h = std::string(kHeader) + "\n";
    EXPECT_EQ(line_of(h + "{not json\n"), 2u);
    EXPECT_EQ(line_of(h + event_line("a") + "\n" + R"({"event_id":"b"})" + "\n"), 3u);
    EXPECT_EQ(line_of(h + event_line("a", R"(,"score":0.5)") + "\n"), 2u);
    EXPECT_EQ(line_of(h + R"({"event_id":"b","machine_id":"m1","timestamp":"2024-01-01T00:00:02Z","event_class":"MlObservation","event_type":"X"})"),
              2u);
    EXPECT_EQ(line_of(h + R"({"event_id":"b","machine_id":"m1","timestamp":"2024-01-01T00:00:02Z","event_class":"MlObservation","event_type":"X","score":1.5})"),
              2u);
    EXPECT_EQ(line_of(h + event_line("a", R"(,"details":{"k":1})")), 2u);
    EXPECT_EQ(line_of(R"({"machine_id":"m1","timeframe_start":"2024-01-01T06:00:00Z","timeframe_end":"2024-01-01T00:00:00Z","label":"hok"})"),
              1u);
    EXPECT_EQ(line_of(R"({"machine_id":"m1","timeframe_start":"2024-01-01T00:00:00Z","timeframe_end":"2024-01-01T06:00:00Z","label":"maybe"})"),
              1u);
}

TEST(Telemetry, DuplicateKeysInJsonUseLastValue) {
    // Duplicate event_class key; the later, invalid value must be seen.
    const std::string h = std::string(kHeader) + "\n";
    EXPECT_THROW(parse_event_stream(h + event_line("a", R"(,"event_class":"Bogus")")), ParseError);
}

TEST(Telemetry, ValidationFindingsInOrder) {
    SampleMeta meta;
    meta.machine_id = "m1";
    meta.timeframe_start = Timestamp{1000};
    meta.timeframe_end = Timestamp{5000};
    RawEvent ok;
    ok.event_id = "a";
    ok.machine_id = "m1";
    ok.timestamp = Timestamp{2000};
    auto dup = ok;
    auto late = ok;
    late.event_id = "late";
    late.timestamp = Timestamp{6000};
    auto other = ok;
    other.event_id = "other";
    other.machine_id = "m2";
    auto ml = ok;
    ml.event_id = "ml";
    ml.event_class = EventClass::MlObservation;
    auto ml_bad = ml;
    ml_bad.event_id = "ml_bad";
    ml_bad.score = 2.0;
    auto report = validate_sample({ok, dup, late, other, ml, ml_bad}, meta);
    std::vector<Finding> expected{{FindingKind::DuplicateId, "a"},
                                  {FindingKind::OutOfRange, "late"},
                                  {FindingKind::MachineMismatch, "other"},
                                  {FindingKind::ScorePresence, "ml"},
                                  {FindingKind::ScoreRange, "ml_bad"}};
    EXPECT_EQ(report.findings, expected);

    meta.timeframe_end = meta.timeframe_start;
    auto r2 = validate_sample({ok}, meta);
    ASSERT_FALSE(r2.ok());
    EXPECT_EQ(r2.findings.front().kind, FindingKind::BadTimeframe);
}

TEST(Telemetry, StreamValidationRaisesValidationError) {
    const std::string h = std::string(kHeader) + "\n";
    EXPECT_THROW(parse_event_stream(h + event_line("a") + "\n" + event_line("a") + "\n"), ValidationError);
    auto wrong_machine = event_line("a");
    wrong_machine.replace(wrong_machine.find("\"m1\""), 4, "\"m9\"");
    EXPECT_THROW(parse_event_stream(h + wrong_machine), ValidationError);
}
