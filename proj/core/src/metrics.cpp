#include "deft/metrics.hpp"

#include "deft/error.hpp"

namespace deft {

double f1_score(double precision, double recall) {
  const double sum = precision + recall;
  if (sum <= 0.0) {
    return 0.0;
  }
  return 2.0 * precision * recall / sum;
}

SelectionMetrics selection_metrics(const Mask& selected, const Mask& true_clean) {
  if (selected.size() != true_clean.size()) {
    throw DimensionError("selection_metrics: mask lengths differ (" +
                         std::to_string(selected.size()) + " vs " +
                         std::to_string(true_clean.size()) + ")");
  }
  SelectionMetrics m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]) {
      ++m.n_selected;
    }
    if (true_clean[i]) {
      ++m.n_true_clean;
    }
    if (selected[i] && true_clean[i]) {
      ++hits;
    }
  }
  if (m.n_selected == 0) {
    m.precision = 1.0;
    m.recall = 0.0;
  } else {
    m.precision = static_cast<double>(hits) / static_cast<double>(m.n_selected);
    m.recall = m.n_true_clean == 0
                   ? 1.0
                   : static_cast<double>(hits) / static_cast<double>(m.n_true_clean);
  }
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

Mask true_clean_mask(const LabeledDataset& ds) {
  if (!ds.has_true_labels()) {
    throw DataValidationError("true_clean_mask needs a dataset with true labels");
  }
  Mask mask(ds.n, 0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    mask[i] = ds.given_labels[i] == (*ds.true_labels)[i] ? 1 : 0;
  }
  return mask;
}

}  // namespace deft
