#pragma once

#include <cstdint>
#include <random>

namespace sdgn {

using rng_engine = std::mt19937_64;

// Independent, reproducible stream `stream` derived from a user seed.
inline rng_engine make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
        0x5d6eu};
    return rng_engine(seq);
}

inline double uniform(rng_engine& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Streams used by the library. Keeping them named avoids accidental reuse.
namespace streams {
inline constexpr std::uint64_t graph = 1;
inline constexpr std::uint64_t params = 2;
inline constexpr std::uint64_t events = 3;
inline constexpr std::uint64_t topology = 4;
inline constexpr std::uint64_t weights = 5;
inline constexpr std::uint64_t monte_carlo = 6;
inline constexpr std::uint64_t negatives = 7;
inline constexpr std::uint64_t ablation = 8;
inline constexpr std::uint64_t oracle = 9;
} // namespace streams

} // namespace sdgn
