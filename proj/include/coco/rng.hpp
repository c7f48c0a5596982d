#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace coco {

// All randomness in the project flows through mt19937_64 plus the helpers
// below. std::uniform_*_distribution is implementation-defined, so we draw
// raw engine output ourselves to keep runs reproducible across toolchains.
using Rng = std::mt19937_64;

// Uniform integer in [0, n). Masked rejection sampling, no modulo bias.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  std::uint64_t mask = n - 1;
  mask |= mask >> 1;
  mask |= mask >> 2;
  mask |= mask >> 4;
  mask |= mask >> 8;
  mask |= mask >> 16;
  mask |= mask >> 32;
  for (;;) {
    std::uint64_t x = rng() & mask;
    if (x < n) return x;
  }
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_real(rng);
}

// Standard normal via Box-Muller (one value per call; the sibling draw is
// discarded to keep the stream layout simple).
inline double normal(Rng& rng) {
  double u1 = uniform_real(rng);
  while (u1 <= 0.0) u1 = uniform_real(rng);
  const double u2 = uniform_real(rng);
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace coco
