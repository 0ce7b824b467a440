#pragma once

#include <cstdint>
#include <random>

namespace memcal {

/// Mixes a base seed and a stream index into an independent 64-bit seed.
/// This is the SplitMix64 output function applied to
/// `base + (stream + 1) * 0x9E3779B97F4A7C15`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// Project-wide random source: std::mt19937_64 seeded with a single 64-bit
/// value. The engine's output sequence is fixed by the C++ standard; the
/// normal deviates come from std::normal_distribution and are therefore
/// reproducible bit-for-bit on one standard library implementation.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    std::uniform_int_distribution<std::uint64_t> dist(0, bound - 1);
    return dist(engine_);
  }

  double normal(double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

private:
  std::mt19937_64 engine_;
};

}  // namespace memcal
