#pragma once

#include <cmath>
#include <cstdint>

#include "vrprox/types.hpp"

namespace vrprox {

// SplitMix64 finalizer; full-period avalanche of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Derives an independent stream id from (seed, tag, index). Streams keyed this
// way make row-parallel generation and per-run sampling reproducible
// regardless of scheduling.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t tag,
                                   std::uint64_t index = 0) {
  std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL * (tag + 1));
  return mix64(h ^ (index + 0x9e3779b97f4a7c15ULL));
}

// Deterministic generator: SplitMix64 stream with Box-Muller normals. Used
// instead of std:: distributions so that sequences are identical across
// standard libraries and thread schedules.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  Scalar next_double() {
    return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  Index next_index(Index n) {
    const auto wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<Index>((wide * static_cast<std::uint64_t>(n)) >> 64);
  }

  Scalar next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    Scalar u1 = next_double();
    const Scalar u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const Scalar radius = std::sqrt(-2.0 * std::log(u1));
    const Scalar angle = 2.0 * M_PI * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  // +1 or -1 with equal probability.
  Scalar next_sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

 private:
  std::uint64_t state_;
  Scalar cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace vrprox
