#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deft/math.hpp"

namespace deft {

/// A single feature vector in the shared image/text space.
using Embedding = std::vector<float>;

/// One-byte-per-sample selection mask; nonzero means selected/clean.
using Mask = std::vector<std::uint8_t>;

enum class FileFormat { binary, csv };

/// Labeled embedding dataset. `given_labels` is the (possibly corrupted)
/// supervision; `true_labels`, when present, is the hidden ground truth used
/// only for evaluation and noise synthesis.
struct LabeledDataset {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<float> features;  // n x dim, row-major
  std::vector<std::uint32_t> given_labels;
  std::optional<std::vector<std::uint32_t>> true_labels;
  std::vector<std::string> class_names;
  bool normalized = false;

  std::span<const float> embedding(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  std::span<float> embedding(std::size_t i) { return {features.data() + i * dim, dim}; }

  bool has_true_labels() const { return true_labels.has_value(); }

  /// Fraction of samples whose given label differs from the true label.
  double noise_fraction() const;

  /// Checks every structural invariant; throws on violation.
  void validate() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// "class_0" ... "class_{k-1}".
std::vector<std::string> default_class_names(std::size_t num_classes);

/// Copies embeddings into a rows x dim double matrix for accumulation-heavy
/// code paths.
Matrix to_f64_matrix(const LabeledDataset& ds);

FileFormat format_from_path(const std::string& path);

LabeledDataset load_embeddings(const std::string& path, FileFormat format);
void write_embeddings(const LabeledDataset& ds, const std::string& path, FileFormat format);

/// Selection masks serialize as one '0' or '1' per line.
Mask load_mask(const std::string& path);
void write_mask(const Mask& mask, const std::string& path);

}  // namespace deft
