// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cmath>
#include <cstdint>

namespace ftseg {

/// Portable 64-bit generator (SplitMix64 update function). Every stochastic
/// component of the engine draws from this so that datasets, parameter
/// initializations and shuffles are bit-reproducible across platforms and
/// standard-library implementations.
///
/// State update:  s += 0x9E3779B97F4A7C15
/// Output mix:    z = s; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
///                z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  /// Independent stream for (seed, stream), e.g. one per sample index.
  /// Defined as Rng(mix(seed) ^ mix(stream ^ 0x6a09e667f3bcc909)).
  static Rng keyed(uint64_t seed, uint64_t stream) {
    return Rng(mix64(seed) ^ mix64(stream ^ 0x6a09e667f3bcc909ULL));
  }

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  /// Uniform double in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0,n). n must be positive.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; pairs of uniforms, second value cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // u1 in (0,1] so the log is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  static uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace ftseg
