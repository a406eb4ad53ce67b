#pragma once

#include <cstdint>
#include <random>

namespace pasmr {

// SplitMix64 step; used only to derive stream seeds, never as the stream itself.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and up to four tags.
/// Same inputs give the same seed on every platform.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0,
                                 std::uint64_t d = 0) {
    std::uint64_t s = base;
    std::uint64_t out = splitmix64(s);
    s ^= a;  out ^= splitmix64(s);
    s ^= b;  out ^= splitmix64(s);
    s ^= c;  out ^= splitmix64(s);
    s ^= d;  out ^= splitmix64(s);
    return out;
}

/// Deterministic RNG wrapper. The engine (mt19937_64) produces a portable
/// bit stream; the distributions below are hand-rolled so results do not
/// depend on the standard library's unspecified distribution algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n) by rejection; n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    /// Uniform integer in [lo, hi] inclusive.
    long long uniform_int(long long lo, long long hi) {
        return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    /// Uniform double in [a, b).
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

private:
    std::mt19937_64 eng_;
};

}  // namespace pasmr
