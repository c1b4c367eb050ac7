#pragma once

#include "deft/dataset.hpp"

namespace deft {

/// Precision/recall/F1 of a clean-sample selection against the ground-truth
/// clean set.
struct SelectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_selected = 0;
  std::size_t n_true_clean = 0;
};

/// Harmonic mean of precision and recall; 0 when both are 0. Works on raw
/// fractions and on percentage-scaled values alike.
double f1_score(double precision, double recall);

/// An empty selection scores precision 1 (vacuous truth) and recall 0.
SelectionMetrics selection_metrics(const Mask& selected, const Mask& true_clean);

/// Mask of samples whose given label equals the true label.
Mask true_clean_mask(const LabeledDataset& ds);

}  // namespace deft
