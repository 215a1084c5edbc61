#pragma once

#include <cstdint>
#include <random>

namespace ppkt {

/// Seeded 64-bit generator.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Its seed is SplitMix64(seed ^ SplitMix64(stream)), so every
/// (seed, stream) pair names one reproducible sequence. All derived draws
/// (uniform reals, bounded integers, normals) are computed here rather than
/// through <random> distributions, whose algorithms vary between
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent generator sharing this seed.
  Rng fork(std::uint64_t stream) const { return Rng(seed_, stream); }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ppkt
