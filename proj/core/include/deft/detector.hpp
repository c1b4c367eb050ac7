#pragma once

#include <cstdint>
#include <optional>

#include "deft/adapt_types.hpp"
#include "deft/dataset.hpp"
#include "deft/math.hpp"
#include "deft/metrics.hpp"
#include "deft/rng.hpp"

namespace deft {

/// Learnable per-class positive/negative prompt embeddings, unit rows.
/// The positive row captures the class; the negative row realizes the
/// per-sample similarity threshold used to separate clean from noisy labels.
struct PromptPair {
  Matrix positive;  // num_classes x dim
  Matrix negative;  // num_classes x dim

  std::size_t num_classes() const { return positive.rows(); }
  std::size_t dim() const { return positive.cols(); }

  friend bool operator==(const PromptPair&, const PromptPair&) = default;
};

struct DetectorConfig {
  double tau = kDefaultTau;
  int warmup_epochs = 1;   // epochs 1..warmup_epochs train on all samples
  int detect_epochs = 10;  // total epochs; epochs warmup+1..detect_epochs use the clean subset
  double lr = 3e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  double lambda_pos = 1.0;  // weight on the positive (pseudo-label) loss term
  bool consistency_constraint = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Preset for heavy corruption: down-weighted positive loss and a smaller
/// learning rate.
DetectorConfig severe_noise_preset(DetectorConfig base = {});

/// Verdicts and supporting statistics for one selection pass.
struct SelectionResult {
  Mask clean_mask;
  std::vector<double> pos_sim;     // sim(I_i, T^+_{y_i})
  std::vector<double> threshold;   // sim(I_i, T^-_{y_i})
  std::vector<double> clean_prob;  // two-way softmax of the pair above
  std::vector<std::uint32_t> pseudo_labels;

  std::size_t selected_count() const;
};

struct ZeroShotResult {
  std::vector<std::uint32_t> labels;
  Matrix probabilities;  // n x num_classes
};

/// Softmax over cosine similarities to the positive prompts; ties resolve to
/// the smallest class id.
ZeroShotResult zero_shot_predict(const LabeledDataset& ds, const Matrix& positive_prompts,
                                 Temperature tau);
inline ZeroShotResult zero_shot_predict(const LabeledDataset& ds, const PromptPair& prompts,
                                        Temperature tau) {
  return zero_shot_predict(ds, prompts.positive, tau);
}

/// The sample's learnable threshold: cosine similarity between its embedding
/// and the negative prompt of its given class.
double threshold(const LabeledDataset& ds, const PromptPair& prompts, std::size_t index);

/// sigmoid((sim+ - sim-) / tau) per sample, i.e. the two-way softmax of the
/// positive-vs-negative similarity of the sample's given class.
std::vector<double> clean_probability(const LabeledDataset& ds, const PromptPair& prompts,
                                      Temperature tau);

/// Marks sample i clean iff sim(I_i, T^+_{y_i}) > threshold_i (strict, so
/// exact ties are noisy). With the consistency constraint the zero-shot
/// prediction must also equal the given label.
SelectionResult select_clean(const LabeledDataset& ds, const PromptPair& prompts, Temperature tau,
                             bool consistency_constraint);

/// Complementary label per sample: uniform over classes other than the given
/// and pseudo label (other than the given label alone when that set is
/// empty).
std::vector<std::uint32_t> sample_complementary_labels(const LabeledDataset& ds,
                                                       std::span<const std::uint32_t> pseudo_labels,
                                                       Rng& rng);

struct DualPromptLoss {
  double value = 0.0;
  Matrix grad_positive;
  Matrix grad_negative;
};

/// Dual-prompt detection loss: mean over samples of
///   lambda_pos * -log p_clean[pseudo]  +  -log(1 - p_clean[complementary])
/// with probabilities clamped to [1e-12, 1 - 1e-12] before the logs.
/// Gradients flow to both prompt matrices only, never into the embeddings.
DualPromptLoss loss_dp(const LabeledDataset& ds, const PromptPair& prompts, Temperature tau,
                       std::span<const std::uint32_t> pseudo_labels,
                       std::span<const std::uint32_t> complementary_labels, double lambda_pos);

struct AlignmentLoss {
  double value = 0.0;
  Matrix grad_positive;
  AdapterParams grad_adapter;  // same shape as the adapter, zero for identity
};

/// Image-text alignment loss over `subset`: cross-entropy of the softmax over
/// positive-prompt similarities of the adapted embedding, evaluated at
/// targets[i]. Gradients cover the positive prompts and the adapter.
AlignmentLoss loss_sim(const LabeledDataset& ds, std::span<const std::size_t> subset,
                       std::span<const std::uint32_t> targets, const Matrix& positive_prompts,
                       Temperature tau, const AdapterParams& adapter);

/// Positive prompts start at the normalized per-class mean of the samples
/// carrying that given label; negatives at the normalized mean of the other
/// classes' positives plus small seeded noise.
PromptPair init_prompts(const LabeledDataset& ds, std::uint64_t seed);

struct DetectorEpochStats {
  int epoch = 0;
  double loss_dp = 0.0;
  double loss_sim = 0.0;
  std::size_t n_selected = 0;
  std::optional<SelectionMetrics> metrics;  // present when true labels are known
};

struct DetectorResult {
  PromptPair prompts;
  AdapterParams adapter;
  SelectionResult selection;
  std::vector<DetectorEpochStats> trace;
};

/// Phase-1 training. Warm-up epochs optimize both losses on every sample
/// with the given labels as positive targets; detection epochs recompute
/// pseudo labels, rebuild the clean subset, and restrict the alignment loss
/// to it. Prompts are renormalized after every step. Deterministic per seed.
DetectorResult train_detector(const LabeledDataset& ds, const DetectorConfig& config,
                              AdapterParams adapter);

/// Writes the per-epoch trace as CSV:
/// epoch,loss_dp,loss_sim,n_selected,precision,recall,f1
/// (metric columns stay empty when true labels are unknown).
void write_detector_trace(const std::vector<DetectorEpochStats>& trace, const std::string& path);

}  // namespace deft
