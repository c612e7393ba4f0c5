#pragma once

#include <cstdint>
#include <initializer_list>

namespace gigwms {

/// Counter-splittable 64-bit generator (splitmix64). All randomness in the
/// project flows through this type so that runs are reproducible across
/// platforms and standard-library versions.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += kGamma;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi); returns lo exactly when lo == hi.
    double next_double_in(double lo, double hi) {
        if (lo >= hi) return lo;
        return lo + next_double() * (hi - lo);
    }

    /// Advance the stream by `count` draws in O(1). Equivalent to calling
    /// next() `count` times and discarding the results.
    void skip(uint64_t count) { state_ += kGamma * count; }

private:
    static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
    uint64_t state_;
};

namespace detail {

inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
    return z ^ (z >> 33);
}

} // namespace detail

/// Derive a child seed from a base seed and a path of indices/tags.
/// Used for counter-based splitting: trials, runs and per-step streams get
/// independent, order-free seeds.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
    uint64_t s = detail::mix64(base ^ 0x6A09E667F3BCC909ULL);
    for (uint64_t v : path) {
        s = detail::mix64(s ^ (v + 0x9E3779B97F4A7C15ULL + (s << 6) + (s >> 2)));
    }
    return s;
}

inline uint64_t derive_seed(uint64_t base, uint64_t a) { return derive_seed(base, {a}); }
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) { return derive_seed(base, {a, b}); }
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b, uint64_t c) { return derive_seed(base, {a, b, c}); }

} // namespace gigwms
