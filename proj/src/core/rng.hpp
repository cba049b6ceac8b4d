#pragma once

#include <cstdint>
#include <random>

namespace nlelab {

/// Deterministic RNG wrapper. All randomized paths in the library derive from
/// an explicit seed so repeated runs are bit-identical across platforms; the
/// uniform mapping is hand-rolled because std::uniform_real_distribution is
/// not guaranteed to produce the same stream everywhere.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return eng_() % n; }

private:
  std::mt19937_64 eng_;
};

/// Stable seed derivation for per-item streams (splitmix64 step).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace nlelab
