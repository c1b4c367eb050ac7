#pragma once

#include <cstdint>
#include <string>

#include "deft/math.hpp"

namespace deft {

enum class AdapterMode { identity, low_rank, full };

const char* to_string(AdapterMode mode);
AdapterMode adapter_mode_from_string(const std::string& name);

/// Image-space adaptation parameters. `low_rank` is the parameter-efficient
/// surrogate (residual bottleneck, few parameters); `full` is the
/// full-fine-tuning surrogate (dense d x d transform, initialized at the
/// identity). The raw transforms are
///   identity: u = x
///   low_rank: u = x + residual_scale * (x * down) * up
///   full:     u = x * dense
struct AdapterParams {
  AdapterMode mode = AdapterMode::identity;
  std::size_t dim = 0;
  std::size_t rank = 8;
  double residual_scale = 0.1;
  Matrix down;   // dim x rank
  Matrix up;     // rank x dim
  Matrix dense;  // dim x dim

  static AdapterParams make_identity(std::size_t dim);
  /// down starts with small seeded Gaussian entries and up at zero, so the
  /// initial residual is exactly zero while both factors receive gradient.
  static AdapterParams make_low_rank(std::size_t dim, std::size_t rank, double residual_scale,
                                     std::uint64_t seed);
  static AdapterParams make_full(std::size_t dim);

  /// Same mode and shapes, all parameter values zero. Gradient container.
  AdapterParams zeros_like() const;

  std::size_t parameter_count() const;

  void validate() const;

  friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

/// Applies the adapter's raw transform in doubles; out.size() == x.size().
void adapt_into(std::span<const double> x, const AdapterParams& params, std::span<double> out);

/// Public adapter application: raw transform followed by renormalization.
/// Identity mode is a bit-for-bit pass-through.
std::vector<float> apply_adapter(std::span<const float> input, const AdapterParams& params);

}  // namespace deft
