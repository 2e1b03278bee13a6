#pragma once

#include <cstdint>
#include <random>

namespace vegdyn {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to decorrelate (seed, stream) pairs.
std::uint64_t mix64(std::uint64_t x);

// Independent, reproducible stream for replica `stream` of a run seeded with `seed`.
Rng make_stream(std::uint64_t seed, std::uint64_t stream = 0);

// Uniform on [0,1) with 53 random bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform on (0,1]; safe argument for log().
inline double uniform_open0(Rng& rng) { return 1.0 - uniform01(rng); }

}  // namespace vegdyn
