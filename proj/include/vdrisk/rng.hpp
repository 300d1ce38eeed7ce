#pragma once

#include <cmath>
#include <cstdint>

namespace vdrisk::rng {

// SplitMix64 (Steele, Lea & Flood, 2014). All state transitions and outputs
// are pure 64-bit integer arithmetic, so identical seeds give identical
// streams on every platform.
inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += kGamma;
    return mix64(state_);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_open01() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // bound must be > 0. Plain modulo: the (negligible) bias is acceptable,
  // bit-stable results are not negotiable.
  std::uint64_t uniform_int(std::uint64_t bound) { return next() % bound; }

  // Irwin-Hall(12) sum; mean 0, unit variance. Avoids transcendental
  // functions whose last-ulp behaviour differs between libm builds.
  double normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform01();
    return s - 6.0;
  }

  double exponential(double rate) { return -std::log(uniform_open01()) / rate; }

 private:
  std::uint64_t state_;
};

// Derives an independent stream for (seed, unit, phase). Each participant,
// fold or endpoint draws from its own stream, so evaluation order and thread
// count cannot change results.
inline SplitMix64 stream(std::uint64_t seed, std::uint64_t unit, std::uint64_t phase = 0) {
  std::uint64_t s = mix64(seed ^ kGamma);
  s = mix64(s + (unit + 1) * kGamma);
  s = mix64(s + (phase + 1) * 0xD1B54A32D192ED03ull);
  return SplitMix64(s);
}

}  // namespace vdrisk::rng
