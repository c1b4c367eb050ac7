#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "deft/adapt_types.hpp"
#include "deft/dataset.hpp"

namespace deft {

/// Linear classification head over (possibly transformed) embeddings.
struct LinearClassifier {
  Matrix weights;  // num_classes x dim
  std::vector<double> bias;

  std::size_t num_classes() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }

  friend bool operator==(const LinearClassifier&, const LinearClassifier&) = default;
};

struct SgdConfig {
  double lr = 5e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// One SGD-with-momentum update:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// `velocity` must match the parameter shape and persists across steps.
void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, const SgdConfig& config);

struct CrossEntropyLoss {
  double value = 0.0;
  std::vector<double> grad;  // softmax(logits) - onehot(label)
};

/// -log softmax(logits)[label], computed with max-subtraction and a clamped
/// logarithm.
CrossEntropyLoss cross_entropy(std::span<const double> logits, std::uint32_t label);

enum class Phase2Mode { linear_probe, peft_surrogate, fft_surrogate };

const char* to_string(Phase2Mode mode);
Phase2Mode phase2_mode_from_string(const std::string& name);

struct Phase2Config {
  Phase2Mode mode = Phase2Mode::fft_surrogate;
  int epochs = 10;
  double lr = 5e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::size_t adapter_rank = 8;       // peft surrogate bottleneck
  double residual_scale = 0.1;
  bool freeze_transform = false;      // train the classifier only
  std::uint64_t seed = 0;

  void validate() const;
};

struct Phase2EpochStats {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> test_accuracy;
};

struct Phase2Result {
  LinearClassifier classifier;
  AdapterParams adapter;
  std::vector<Phase2EpochStats> trace;

  /// Highest per-epoch test accuracy seen during training.
  std::optional<double> best_test_accuracy() const;
  /// Test accuracy at the final epoch.
  std::optional<double> last_test_accuracy() const;
};

/// Cross-entropy adaptation on the masked samples only. linear_probe trains
/// the classifier over frozen embeddings; peft_surrogate adds a low-rank
/// residual adapter; fft_surrogate adds a dense transform initialized at the
/// identity. When `test` is given, accuracy is evaluated after every epoch.
Phase2Result train_phase2(const LabeledDataset& train, const Mask& clean_mask,
                          const Phase2Config& config, const LabeledDataset* test = nullptr);

/// Argmax-logit accuracy against the true labels (given labels when no truth
/// is stored). Ties resolve to the smallest class id.
double evaluate(const LinearClassifier& model, const AdapterParams& adapter,
                const LabeledDataset& test);

/// Per-sample cross-entropy of the given labels under the model; feeds the
/// small-loss and GMM selectors.
std::vector<double> per_sample_losses(const LinearClassifier& model, const AdapterParams& adapter,
                                      const LabeledDataset& ds);

/// Model checkpoint (magic DEFTMDL1, little-endian shapes, f32 payloads).
void save_model(const LinearClassifier& model, const AdapterParams& adapter,
                const std::string& path);
std::pair<LinearClassifier, AdapterParams> load_model(const std::string& path);

/// Trace CSV: epoch,loss,test_acc (accuracy column empty without a test set).
void write_phase2_trace(const std::vector<Phase2EpochStats>& trace, const std::string& path);

}  // namespace deft
