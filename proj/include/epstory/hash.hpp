#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace epstory {

/// Stable 64-bit string hash used for feature hashing, per-sample seeding and
/// config fingerprints. Defined as FNV-1a over the bytes of `text`, starting
/// from `offset_basis ^ seed`, followed by the MurmurHash3 fmix64 finalizer.
/// The result depends only on the bytes, never on platform or library.
inline constexpr std::uint64_t fmix64(std::uint64_t k) noexcept {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    k *= 0xc4ceb9fe1a85ec53ULL;
    k ^= k >> 33;
    return k;
}

inline constexpr std::uint64_t stable_hash(std::uint64_t seed, std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return fmix64(h);
}

/// Seed perturbation for the second (sign) hash.
inline constexpr std::uint64_t kSignSeedSalt = 0x9e3779b97f4a7c15ULL;

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace epstory
