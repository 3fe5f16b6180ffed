#pragma once
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fluencebench {

// Counter-based random primitives. Every draw is a pure function of
// (seed, counter), so results are independent of evaluation order and
// thread scheduling.

inline uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

inline uint64_t hash64(uint64_t seed, uint64_t counter) {
    return mix64(seed + (counter + 1) * 0x9E3779B97F4A7C15ULL);
}

// FNV-1a, used to derive stream seeds from names and to fingerprint configs.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline uint64_t substream(uint64_t seed, std::string_view name) {
    return mix64(seed ^ fnv1a64(name));
}

// Uniform in [0,1).
inline double uniform01(uint64_t seed, uint64_t counter) {
    return static_cast<double>(hash64(seed, counter) >> 11) * 0x1.0p-53;
}

// Uniform in [-1,1).
inline double uniform_pm1(uint64_t seed, uint64_t counter) {
    return 2.0 * uniform01(seed, counter) - 1.0;
}

// Standard normal via Box-Muller on one 64-bit draw.
inline double normal01(uint64_t seed, uint64_t counter) {
    const uint64_t h = hash64(seed, counter);
    const double u1 = (static_cast<double>(h >> 32) + 1.0) * 0x1.0p-32; // (0,1]
    const double u2 = static_cast<double>(h & 0xFFFFFFFFULL) * 0x1.0p-32; // [0,1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// In-place Fisher-Yates keyed by seed. Unlike std::shuffle with a
// std::uniform_int_distribution, this is bit-reproducible across toolchains.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, uint64_t seed) {
    for (size_t i = items.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(hash64(seed, i) % i);
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace fluencebench
