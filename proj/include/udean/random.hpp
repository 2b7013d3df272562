#pragma once

#include <cstdint>
#include <random>

namespace udean {

// The standard distributions are implementation-defined; these keep seeded
// sequences identical across standard libraries.

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi] (inclusive).
inline int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
    const auto span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<int64_t>(rng());
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t draw = rng();
    while (draw >= limit) draw = rng();
    return lo + static_cast<int64_t>(draw % span);
}

/// Independent stream for item `index` of a seeded family.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace udean
