#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace deft {

/// SplitMix64 finalizer; used to derive independent seeds for sub-streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic sub-stream seed for (seed, stream). Two different stream
/// ids give statistically independent generators.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) + stream);
}

/// Deterministic random stream. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard, and every derived draw (uniform
/// reals, bounded integers, normals, shuffles) is implemented here rather
/// than with std::*_distribution, so identical seeds produce identical
/// streams on every platform and standard library.
class Rng {
 public:
  /// Seeds are pre-mixed through SplitMix64: small consecutive seeds would
  /// otherwise land in weakly initialized mt19937_64 states.
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased uniform integer in [0, n). Rejection sampling, n > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal();

  /// Fisher-Yates shuffle driven by uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Fresh deterministic stream for a seed.
inline Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace deft
