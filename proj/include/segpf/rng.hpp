#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace segpf {

// All randomness flows through explicitly derived mt19937_64 streams. Every
// logical unit of work (observation draw, one segment's filter, one
// initializer fit, ...) gets its own stream keyed by (master seed, tag, ids),
// so results do not depend on execution order or worker count.
using Rng = std::mt19937_64;

// splitmix64 finalizer; good avalanche, cheap.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Order-sensitive chained hash of the id list into a seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t h = mix64(master);
    for (std::uint64_t id : ids) h = mix64(h ^ mix64(id));
    return h;
}

inline Rng derive_stream(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
    return Rng(derive_seed(master, ids));
}

// Purpose tags used as the first id of every derived stream.
namespace stream_tag {
inline constexpr std::uint64_t observations = 1;
inline constexpr std::uint64_t segment = 2;
inline constexpr std::uint64_t initializer = 3;
inline constexpr std::uint64_t pair_draws = 4;
inline constexpr std::uint64_t generic = 5;
} // namespace stream_tag

// Distributions are constructed per call so no hidden state (e.g. the cached
// second normal deviate) survives between draws; a stream's output is then a
// pure function of the engine state.
inline double draw_normal(Rng& rng, double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(rng);
}

inline double draw_uniform01(Rng& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(rng);
}

} // namespace segpf
