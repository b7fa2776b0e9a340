#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "epstory/error.hpp"
#include "epstory/hash.hpp"
#include "epstory/text.hpp"
#include "epstory/windowing.hpp"

namespace epstory {

struct WindowEmbedding {
    std::string sample_id;
    std::size_t window_index = 0;
    std::vector<double> vector;
    std::string provider_id;

    bool operator==(const WindowEmbedding&) const = default;
};

inline constexpr double kUnitNormTolerance = 1e-6;

/// Anything that maps windows to unit vectors of a fixed dimension.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;

    /// One vector per text, in order.
    virtual std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts) = 0;
};

/// Throws ProtocolError naming `window_index` when the vector breaks the
/// WindowEmbedding invariants.
inline void check_embedding_vector(const std::vector<double>& v, std::size_t expected_dim, std::size_t window_index) {
    if (v.size() != expected_dim)
        throw ProtocolError(window_index, "dimension " + std::to_string(v.size()) + " != expected " +
                                              std::to_string(expected_dim));
    double sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw InvalidVectorError(window_index, "non-finite component");
        sq += x * x;
    }
    double norm = std::sqrt(sq);
    if (std::abs(norm - 1.0) > kUnitNormTolerance)
        throw InvalidVectorError(window_index, "vector norm " + std::to_string(norm) + " is not 1");
}

/// Embeds windows through `provider`, preserving order and validating every vector.
inline std::vector<WindowEmbedding> embed_windows(std::span<const Window> windows, EmbeddingProvider& provider) {
    std::vector<WindowEmbedding> out;
    if (windows.empty()) return out;
    std::vector<std::string> texts;
    texts.reserve(windows.size());
    for (const auto& w : windows) texts.push_back(w.text);
    auto vectors = provider.embed_texts(texts);
    if (vectors.size() != windows.size())
        throw ProtocolError(std::min(vectors.size(), windows.size()), "provider returned " +
                                                                          std::to_string(vectors.size()) + " vectors for " +
                                                                          std::to_string(windows.size()) + " windows");
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        check_embedding_vector(vectors[i], provider.dimension(), windows[i].index);
        out.push_back({windows[i].sample_id, windows[i].index, std::move(vectors[i]), provider.id()});
    }
    return out;
}

/// Signed feature hashing of whitespace tokens:
///   index = stable_hash(seed, token) mod D
///   sign  = +1 if stable_hash(seed ^ kSignSeedSalt, token) is even, else -1
/// The accumulated vector is L2-normalized; an all-zero accumulation becomes e_0.
inline std::vector<double> builtin_hash_embed(std::string_view text, std::size_t dimension, std::uint64_t seed) {
    if (dimension < 1) throw ArgumentError("embedding dimension must be at least 1");
    std::vector<double> v(dimension, 0.0);
    for_each_token(text, [&](std::string_view token) {
        auto idx = stable_hash(seed, token) % dimension;
        double sign = (stable_hash(seed ^ kSignSeedSalt, token) & 1u) ? -1.0 : 1.0;
        v[idx] += sign;
    });
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq == 0.0) {
        v[0] = 1.0;
        return v;
    }
    double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
    return v;
}

/// Deterministic stand-in for a language-model embedding service.
class HashEmbedder final : public EmbeddingProvider {
public:
    HashEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
        if (dimension < 1) throw ArgumentError("embedding dimension must be at least 1");
    }

    std::string id() const override { return "hash-d" + std::to_string(dimension_) + "-s" + std::to_string(seed_); }
    std::size_t dimension() const override { return dimension_; }

    std::vector<std::vector<double>> embed_texts(std::span<const std::string> texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(builtin_hash_embed(t, dimension_, seed_));
        return out;
    }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

// Embedding records (one JSON object per window).
inline ordered_json to_json(const WindowEmbedding& e) {
    ordered_json j;
    j["sample_id"] = e.sample_id;
    j["window_index"] = e.window_index;
    j["provider_id"] = e.provider_id;
    j["vector"] = e.vector;
    return j;
}

inline WindowEmbedding embedding_from_json(const ordered_json& j) {
    WindowEmbedding e;
    try {
        e.sample_id = j.at("sample_id").get<std::string>();
        e.window_index = j.at("window_index").get<std::size_t>();
        e.provider_id = j.at("provider_id").get<std::string>();
        e.vector = j.at("vector").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("embedding record: ") + ex.what());
    }
    return e;
}

}  // namespace epstory
