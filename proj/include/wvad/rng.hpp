#pragma once

#include <cstdint>
#include <random>

namespace wvad {

// All randomness in a run flows from one user seed; independent phases
// (weight init, sampler, reparameterization noise, EM seeding, label split)
// use sub-seeds derived with splitmix64 so adding a consumer never shifts
// another one's stream.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

// Unbiased draw in [0, bound) by rejection; unlike the std distributions its
// output is pinned by the standardised mt19937_64 stream alone.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t threshold = (0ULL - bound) % bound;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % bound;
    }
}

// Stream tags for derive_seed; one per independent consumer.
namespace streams {
inline constexpr std::uint64_t kEncoderInit = 1;
inline constexpr std::uint64_t kDecoderInit = 2;
inline constexpr std::uint64_t kEstimatorInit = 3;
inline constexpr std::uint64_t kSampler = 4;
inline constexpr std::uint64_t kEpsNoise = 5;
inline constexpr std::uint64_t kEmInit = 6;
inline constexpr std::uint64_t kLabelSplit = 7;
inline constexpr std::uint64_t kSynthetic = 8;
}  // namespace streams

}  // namespace wvad
