#pragma once

#include <cstdint>

namespace nexlim {

// Counter-based random streams. Every draw is a pure function of
// (seed, stream tag, i, j), so enlarging N, reordering loops or running
// edges in parallel never reshuffles previously drawn values.

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}
}  // namespace detail

enum class Stream : std::uint64_t {
    label = 1,   // i.i.d. vertex labels (r-r sampling)
    edge = 2,    // per-edge weight draws
    search = 3,  // heuristic restarts
    init = 4,    // random initial data
};

inline std::uint64_t counter_bits(std::uint64_t seed, Stream s,
                                  std::uint64_t i, std::uint64_t j) {
    using detail::mix64;
    const std::uint64_t golden = 0x9e3779b97f4a7c15ULL;
    std::uint64_t h = mix64(seed + golden);
    h = mix64(h ^ (static_cast<std::uint64_t>(s) * golden));
    h = mix64(h ^ (i + golden));
    h = mix64(h ^ (j + golden));
    return h;
}

// Uniform double in [0, 1) from the top 53 bits.
inline double counter_uniform(std::uint64_t seed, Stream s,
                              std::uint64_t i, std::uint64_t j) {
    return static_cast<double>(counter_bits(seed, s, i, j) >> 11) * 0x1.0p-53;
}

}  // namespace nexlim
