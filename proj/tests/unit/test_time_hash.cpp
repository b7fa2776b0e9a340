#include <gtest/gtest.h>

#include "epstory/hash.hpp"
#include "epstory/rng.hpp"
#include "epstory/text.hpp"
#include "epstory/time.hpp"

using namespace epstory;

// Reference values computed with an independent FNV-1a + fmix64 script.
TEST(StableHash, MatchesReferenceValues) {
    EXPECT_EQ(stable_hash(0, ""), 0xefd01f60ba992926ULL);
    EXPECT_EQ(stable_hash(0, "hello"), 0xe9c562c0fdb23244ULL);
    EXPECT_EQ(stable_hash(42, "hello"), 0x9a3b9d1de0814130ULL);
    EXPECT_EQ(stable_hash(7, "whoami.exe"), 0x137e21f16fc6b093ULL);
    EXPECT_EQ(stable_hash(42 ^ kSignSeedSalt, "hello"), 0x20c559c41b04dc66ULL);
}

TEST(StableHash, Hex64IsFixedWidth) {
    EXPECT_EQ(hex64(0), "0000000000000000");
    EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
    EXPECT_EQ(hex64(~0ULL), "ffffffffffffffff");
}

TEST(Rfc3339, ParsesKnownInstant) {
    auto t = parse_rfc3339("2024-02-29T12:34:56.789Z");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->ms, 1709210096789);
    EXPECT_EQ(parse_rfc3339("2024-02-29T12:34:56.789+00:00")->ms, 1709210096789);
    EXPECT_EQ(parse_rfc3339("2024-02-29T12:34:56Z")->ms, 1709210096000);
    EXPECT_EQ(parse_rfc3339("2024-02-29T12:34:56.7899999Z")->ms, 1709210096789);
}

TEST(Rfc3339, RejectsMalformedOrNonUtc) {
    for (const char* bad : {"2024-02-30T00:00:00Z", "2023-02-29T00:00:00Z", "2024-01-01 00:00:00Z",
                            "2024-01-01T24:00:00Z", "2024-01-01T00:00:00+01:00", "2024-01-01T00:00:00",
                            "2024-01-01T00:00:00.Z", "garbage"})
        EXPECT_FALSE(parse_rfc3339(bad)) << bad;
}

TEST(Rfc3339, FormatIsCanonicalAndRoundTrips) {
    EXPECT_EQ(format_rfc3339(Timestamp{1709210096789}), "2024-02-29T12:34:56.789Z");
    EXPECT_EQ(format_rfc3339(Timestamp{-500}), "1969-12-31T23:59:59.500Z");
    EXPECT_EQ(format_compact(Timestamp{1709210096789}), "20240229T123456Z");
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        Timestamp t{rng.uniform_int(-2'000'000'000'000, 4'000'000'000'000)};
        auto back = parse_rfc3339(format_rfc3339(t));
        ASSERT_TRUE(back);
        EXPECT_EQ(back->ms, t.ms);
    }
}

TEST(Timestamp, SecondBucketFloorsTowardNegativeInfinity) {
    EXPECT_EQ(Timestamp{0}.second_bucket(), 0);
    EXPECT_EQ(Timestamp{999}.second_bucket(), 0);
    EXPECT_EQ(Timestamp{1000}.second_bucket(), 1);
    EXPECT_EQ(Timestamp{-1}.second_bucket(), -1);
    EXPECT_EQ(Timestamp{-1000}.second_bucket(), -1);
    EXPECT_EQ(Timestamp{-1001}.second_bucket(), -2);
}

TEST(Text, TokensAndUtf8Length) {
    EXPECT_EQ(count_tokens(""), 0u);
    EXPECT_EQ(count_tokens("  a\tb\n c  "), 3u);
    EXPECT_EQ(utf8_length("h\xc3\xa9llo"), 5u);
    auto toks = tokenize(" x  yz ");
    ASSERT_EQ(toks.size(), 2u);
    EXPECT_EQ(toks[0], "x");
    EXPECT_EQ(toks[1], "yz");
}

TEST(Rng, UniformIntStaysInRangeAndCoversIt) {
    Rng rng(11);
    std::vector<int> seen(7, 0);
    for (int i = 0; i < 7000; ++i) {
        auto v = rng.uniform_int(3, 9);
        ASSERT_GE(v, 3);
        ASSERT_LE(v, 9);
        ++seen[static_cast<std::size_t>(v - 3)];
    }
    for (int c : seen) EXPECT_GT(c, 800);
}
