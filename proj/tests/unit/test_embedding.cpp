#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "epstory/embedding.hpp"
#include "support.hpp"

using namespace epstory;

namespace {

double norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / (norm(a) * norm(b));
}

}  // namespace

// Nonzero entries computed by a separate script that evaluates the hashing
// formula directly (FNV-1a, fmix64, index mod D, parity of the salted hash).
TEST(HashEmbedding, GoldenVectorSeed42Dim256) {
    const std::string text =
        "[alice] ProcessCreate via <PROC_2>: image=<PROC_3>\n"
        "[alice] RegistrySet via <PROC_4>: key=<REG_1> value=updater (x3 similar)";
    const std::vector<std::pair<std::size_t, double>> golden{
        {24, 0.24253562503633297},   {28, 0.24253562503633297},  {42, 0.24253562503633297},
        {54, 0.48507125007266594},   {65, -0.24253562503633297}, {124, 0.24253562503633297},
        {125, 0.24253562503633297},  {126, -0.24253562503633297}, {161, -0.48507125007266594},
        {164, 0.24253562503633297},  {226, -0.24253562503633297},
    };
    auto v = builtin_hash_embed(text, 256, 42);
    ASSERT_EQ(v.size(), 256u);
    std::vector<double> expected(256, 0.0);
    for (const auto& [i, x] : golden) expected[i] = x;
    for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(v[i], expected[i], 1e-15) << "component " << i;
}

TEST(HashEmbedding, EmptyTextIsFirstBasisVector) {
    auto v = builtin_hash_embed("", 16, 42);
    EXPECT_EQ(v[0], 1.0);
    EXPECT_EQ(std::count(v.begin(), v.end(), 0.0), 15);
    auto ws = builtin_hash_embed(" \n\t ", 16, 42);
    EXPECT_EQ(ws, v);
}

TEST(HashEmbedding, SingleTokenIsSignedOneHot) {
    auto v = builtin_hash_embed("whoami.exe", 64, 42);
    EXPECT_EQ(std::count(v.begin(), v.end(), 0.0), 63);
    for (double x : v) {
        if (x != 0.0) {
            EXPECT_EQ(std::abs(x), 1.0);
        }
    }
}

TEST(HashEmbedding, OrderBlindAndDeterministic) {
    auto a = builtin_hash_embed("net user /domain whoami", 256, 42);
    auto b = builtin_hash_embed("whoami /domain user net", 256, 42);
    EXPECT_EQ(a, b);
    HashEmbedder emb(256, 42);
    std::vector<std::string> texts{"same text", "same text"};
    auto out = emb.embed_texts(texts);
    EXPECT_EQ(out[0], out[1]);
    EXPECT_EQ(emb.id(), "hash-d256-s42");
    EXPECT_NE(builtin_hash_embed("x y z", 256, 42), builtin_hash_embed("x y z", 256, 43));
}

TEST(HashEmbedding, RejectsZeroDimension) {
    EXPECT_THROW(builtin_hash_embed("x", 0, 1), ArgumentError);
    EXPECT_THROW(HashEmbedder(0, 1), ArgumentError);
}

TEST(HashEmbedding, UnitNormOnRandomTexts) {
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        std::string text;
        const std::size_t n = rng.index(50);
        for (std::size_t k = 0; k < n; ++k) text += "t" + std::to_string(rng.index(40)) + " ";
        auto v = builtin_hash_embed(text, 1 + rng.index(300), rng.next());
        EXPECT_NEAR(norm(v), 1.0, 1e-12);
    }
}

// Disjoint random 20-token windows at D=256: |cos| < 0.2 for at least 95% of pairs.
TEST(HashEmbedding, DisjointWindowsAreNearlyOrthogonal) {
    Rng rng(123);
    int total = 0, small = 0;
    std::size_t next_token = 0;
    for (int pair = 0; pair < 2000; ++pair) {
        std::string a, b;
        for (int k = 0; k < 20; ++k) a += "tok" + std::to_string(next_token++) + " ";
        for (int k = 0; k < 20; ++k) b += "tok" + std::to_string(next_token++) + " ";
        double c = cosine(builtin_hash_embed(a, 256, 42), builtin_hash_embed(b, 256, 42));
        ++total;
        if (std::abs(c) < 0.2) ++small;
    }
    EXPECT_GE(static_cast<double>(small) / total, 0.95);
}

TEST(EmbedWindows, ValidatesAndKeepsOrder) {
    HashEmbedder emb(32, 1);
    EXPECT_TRUE(embed_windows({}, emb).empty());
    std::vector<Window> windows{{"s", 0, "a b", 2}, {"s", 1, "c", 1}};
    auto out = embed_windows(windows, emb);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].window_index, 1u);
    EXPECT_EQ(out[1].vector, builtin_hash_embed("c", 32, 1));
    EXPECT_EQ(out[0].provider_id, "hash-d32-s1");
    EXPECT_EQ(embedding_from_json(to_json(out[0])), out[0]);
}

TEST(EmbedWindows, VectorChecks) {
    EXPECT_NO_THROW(check_embedding_vector({0.6, 0.8}, 2, 0));
    EXPECT_THROW(check_embedding_vector({1.0}, 2, 0), ProtocolError);
    EXPECT_THROW(check_embedding_vector({0.3, 0.4}, 2, 0), InvalidVectorError);
    EXPECT_THROW(check_embedding_vector({NAN, 1.0}, 2, 0), InvalidVectorError);
    try {
        check_embedding_vector({0.5, 0.0}, 2, 7);
        FAIL();
    } catch (const InvalidVectorError& e) {
        EXPECT_EQ(e.window_index(), 7u);
    }
}
