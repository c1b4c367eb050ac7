#pragma once

#include <cstdint>

#include "deft/dataset.hpp"

namespace deft {

enum class NoiseFamily { symmetric, instance_dependent };

const char* to_string(NoiseFamily family);
NoiseFamily noise_family_from_string(const std::string& name);

/// Record of one label-corruption pass: the family, the requested and
/// realized corruption rates, and the (nominal or empirical) K x K
/// row-stochastic transition matrix T[i][j] = P(y = j | y* = i).
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::symmetric;
  double target_ratio = 0.0;
  double realized_ratio = 0.0;
  Matrix transition_matrix;
  std::uint64_t seed = 0;
};

/// Flips exactly floor(n * ratio) uniformly chosen samples to a uniformly
/// drawn wrong class. Corruption always starts from the true labels.
/// The recorded transition matrix is the nominal one: diagonal 1 - r,
/// off-diagonal r / (K - 1).
std::pair<LabeledDataset, NoiseSpec> inject_symmetric_noise(const LabeledDataset& ds, double ratio,
                                                            std::uint64_t seed);

/// Instance-dependent corruption. Each sample's flip propensity comes from
/// projections of its embedding onto K seeded random directions:
///
///   s_k  = <x_i, w_k>                         (one direction per class)
///   a_i  = logsumexp_{k != y*} s_k  -  s_{y*}
///   p_i  = min(1, m * sigmoid(a_i))
///
/// The shared multiplier m is calibrated by bisection until the realized
/// flip fraction lands within +-0.02 of `ratio`. A flipped sample draws its
/// new label from softmax(s_k, k != y*). Flip decisions use one RNG
/// sub-stream per sample index, so identical embeddings with identical true
/// labels at the same index always resolve identically. The recorded
/// transition matrix is the empirical per-class average.
std::pair<LabeledDataset, NoiseSpec> inject_instance_noise(const LabeledDataset& ds, double ratio,
                                                           std::uint64_t seed);

/// Bookkeeping for a dataset whose labels are already corrupted: realized
/// ratio and empirical transition matrix measured from the stored labels.
NoiseSpec describe_existing_noise(const LabeledDataset& ds, NoiseFamily family,
                                  double target_ratio);

}  // namespace deft
