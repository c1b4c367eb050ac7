#pragma once

#include <cstdint>

#include "deft/dataset.hpp"

namespace deft {

/// Synthetic aligned image/text clusters: class prototypes on the unit
/// sphere, samples as jittered prototypes, and oracle text anchors standing
/// in for pretrained class prompts.
struct SyntheticConfig {
  std::size_t n = 1000;
  std::size_t dim = 64;
  std::size_t num_classes = 10;
  double class_separation = 0.9;   // minimum pairwise prototype angle, radians
  double intra_class_noise = 0.15; // isotropic Gaussian scale around the prototype
  double text_anchor_jitter = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  LabeledDataset dataset;       // clean at birth: given == true labels
  Matrix text_anchors;          // num_classes x dim, unit rows
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

}  // namespace deft
