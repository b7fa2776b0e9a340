#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace epstory {

/// Seeded random source with platform-independent derived distributions.
/// The standard distribution classes are implementation-defined, so only the
/// raw engine output is used.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] (inclusive). Rejection-free via 128-bit multiply.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi <= lo) return lo;
        auto span = static_cast<unsigned __int128>(static_cast<std::uint64_t>(hi - lo) + 1);
        auto r = (static_cast<unsigned __int128>(engine_()) * span) >> 64;
        return lo + static_cast<std::int64_t>(r);
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1)); }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[index(items.size())];
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[index(i)]);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace epstory
