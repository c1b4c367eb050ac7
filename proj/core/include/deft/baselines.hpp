#pragma once

#include <array>
#include <cstdint>

#include "deft/dataset.hpp"
#include "deft/math.hpp"

namespace deft {

/// Two-component 1-D Gaussian mixture over per-sample losses. The component
/// with the smaller mean models the clean samples.
struct GmmModel {
  std::array<double, 2> means{0.0, 0.0};
  std::array<double, 2> variances{1.0, 1.0};
  std::array<double, 2> weights{0.5, 0.5};
  std::vector<double> log_likelihood_trace;
  bool converged = false;

  std::size_t clean_component() const { return means[0] <= means[1] ? 0 : 1; }

  /// Posterior probability that `loss` belongs to the smaller-mean component.
  double posterior_clean(double loss) const;
};

/// Clean iff the zero-shot argmax over `anchors` equals the given label.
/// Invariant to the (positive) temperature by argmax invariance.
Mask select_label_match(const LabeledDataset& ds, const Matrix& anchors, Temperature tau);

/// Within each batch of size B, marks the ceil((1 - noise_ratio) * B)
/// smallest-loss samples clean; ties resolve toward the smaller index.
/// `batches` must partition [0, losses.size()).
Mask select_small_loss(std::span<const double> losses, double noise_ratio,
                       const std::vector<std::vector<std::size_t>>& batches);

/// Whole-dataset variant: one batch covering every index.
Mask select_small_loss_global(std::span<const double> losses, double noise_ratio);

/// Standard EM for the two-component mixture, initialized from the median
/// split of the losses. Stops when the log-likelihood gain drops below `tol`
/// or after `max_iters`; the log-likelihood trace is non-decreasing. The
/// seed is accepted for interface stability; initialization is
/// deterministic and never consumes it.
GmmModel fit_gmm_em(std::span<const double> losses, std::size_t max_iters = 100,
                    double tol = 1e-6, std::uint64_t seed = 0);

/// Clean iff the posterior of the smaller-mean component strictly exceeds
/// `threshold`.
Mask select_gmm(std::span<const double> losses, const GmmModel& model, double threshold = 0.5);

}  // namespace deft
