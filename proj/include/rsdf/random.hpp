#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace rsdf {

/// Engine used everywhere; the distributions below are written out so streams do not
/// depend on the standard library's distribution implementations.
using rng_engine = std::mt19937_64;

/// Engine seeded from a base seed and stream coordinates (epoch, image index, ...).
inline rng_engine make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
    // splitmix64 mixing of the coordinates
    std::uint64_t state = seed ^ 0x9e3779b97f4a7c15ULL;
    const auto mix = [&state](std::uint64_t v) {
        state += v + 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        state = z ^ (z >> 31);
    };
    mix(stream.size());
    for (auto v : stream) mix(v);
    return rng_engine(state);
}

/// Uniform in [0, 1).
inline double uniform01(rng_engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(rng_engine& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(rng_engine& rng, std::size_t n) {
    const auto v = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return v < n ? v : n - 1;
}

inline bool bernoulli(rng_engine& rng, double p) { return uniform01(rng) < p; }

/// Fisher-Yates with uniform_index.
template <typename It>
void shuffle(It first, It last, rng_engine& rng) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
    }
}

} // namespace rsdf
