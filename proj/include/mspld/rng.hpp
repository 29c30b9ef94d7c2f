#pragma once

#include <cstdint>
#include <random>

namespace mspld {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-streams from a seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// A generator for stream `stream` of `seed`. Streams of one seed are
/// independent, so per-image work can be regenerated in any order.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng{mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x51ed27))};
}

}  // namespace mspld
