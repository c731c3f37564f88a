#pragma once

#include <cstdint>
#include <limits>

namespace perp {

/// Counter-based 64-bit generator (SplitMix64). Each draw advances a counter
/// by a fixed odd constant and mixes it, so the k-th output is a pure function
/// of (seed, k). Streams for parallel workers are derived with split():
/// worker k uses split(seed, k), which re-mixes the seed with the stream
/// index and cannot collide with the parent stream for < 2^64 draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static Rng split(std::uint64_t seed, std::uint64_t stream) {
    Rng r(mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1)));
    return r;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform double in [0, 1). 53 mantissa bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Multiply-shift; bias is < n / 2^64, negligible for desk-scale n.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace perp
