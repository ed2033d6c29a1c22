#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace loadest {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Sub-seed for a named purpose. Stable across platforms and runs.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Seeded generator with hand-rolled samplers.
///
/// The standard distributions are implementation-defined, so every sampler
/// here is written against the raw mt19937_64 stream to keep corpora and
/// reports bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi]; rejection sampling, no modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call, no cached partner).
  double normal();

  /// Inversion below 30, rounded normal approximation at or above.
  int poisson(double lambda);

  int binomial(int n, double p);

 private:
  std::mt19937_64 engine_;
};

}  // namespace loadest
