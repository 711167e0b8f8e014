#pragma once

#include <cstdint>

namespace mpsamp {

// Counter-based keyed generator (splitmix64 finalizer chain). A draw is a
// pure function of (seed, stream, sample index, site index), which makes
// outcomes independent of batching, worker count, and execution scheme.
namespace rng {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kMeasureStream = 0x6d656173ull;   // measurement draws
constexpr std::uint64_t kDisplaceStream = 0x64697370ull;  // displacement amplitudes

inline std::uint64_t key(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                         std::uint64_t site) {
    std::uint64_t h = mix64(seed ^ (stream * 0xD6E8FEB86659FD93ull));
    h = mix64(h ^ (sample * 0xA5A5A5A5A5A5A5A5ull));
    h = mix64(h ^ (site * 0xC2B2AE3D27D4EB4Full));
    return h;
}

inline double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                      std::uint64_t site) {
    return to_unit(key(seed, stream, sample, site));
}

// Two independent uniforms from one key, for Box-Muller style pairs.
inline void uniform_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                         std::uint64_t site, double& u1, double& u2) {
    std::uint64_t k = key(seed, stream, sample, site);
    u1 = to_unit(k);
    u2 = to_unit(mix64(k ^ 0x9E3779B97F4A7C15ull));
}

}  // namespace rng
}  // namespace mpsamp
