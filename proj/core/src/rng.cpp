#include "deft/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "deft/error.hpp"

namespace deft {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) {
    throw ConfigError("uniform_int bound must be positive");
  }
  // Largest multiple of n representable in 64 bits; draws at or above it
  // are rejected to keep the modulo unbiased.
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t draw = next_u64();
  while (draw >= limit) {
    draw = next_u64();
  }
  return draw % n;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // Box-Muller; 1 - uniform() keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

}  // namespace deft
