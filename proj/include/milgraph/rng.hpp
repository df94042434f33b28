#pragma once

#include <cmath>
#include <cstdint>

namespace milgraph {

/// Counter-based random generator (SplitMix64 finalizer over a keyed
/// counter). Identical (seed, stream) always yields the identical draw
/// sequence, and any draw is addressable by its counter, so bulk
/// consumers (dropout masks) can fill entries in parallel without
/// changing the result. fork() derives an independent stream, one per
/// (fold, trial, MC sample, ...).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed + 0x9E3779B97F4A7C15ull) ^ mix64(stream + 0xD1B54A32D192ED03ull))) {}

  Rng fork(std::uint64_t substream) const {
    Rng child(key_, substream + 0x8CB92BA72F3D8DD7ull);
    return child;
  }

  /// Raw 64-bit value at an absolute counter position; does not advance.
  std::uint64_t at(std::uint64_t counter) const {
    return mix64(key_ + counter * 0x9E3779B97F4A7C15ull);
  }

  std::uint64_t next_u64() { return at(counter_++); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  static double to_double(std::uint64_t raw) { return static_cast<double>(raw >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; consumes exactly two counters.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t counter() const { return counter_; }
  /// Reserves a block of n counters and returns the first; pair with at().
  std::uint64_t reserve(std::uint64_t n) {
    std::uint64_t base = counter_;
    counter_ += n;
    return base;
  }

 private:
  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace milgraph
