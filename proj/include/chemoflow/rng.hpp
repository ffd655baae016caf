#pragma once

#include <cstdint>

namespace chemoflow {

/// SplitMix64 (Steele, Lea, Flood 2014). Output k of a seed depends only on
/// (seed, k), so fields can be filled in any order or in parallel.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += kGamma;
    return mix(state_);
  }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return to_unit(next()); }

  /// The k-th output (0-based) of a generator seeded with `seed`.
  static std::uint64_t at(std::uint64_t seed, std::uint64_t k) { return mix(seed + (k + 1) * kGamma); }
  static double uniform_at(std::uint64_t seed, std::uint64_t k) { return to_unit(at(seed, k)); }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  static double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace chemoflow
