#include "deft/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "deft/error.hpp"
#include "deft/format.hpp"
#include "deft/rng.hpp"

namespace deft {

namespace {

void phase2_transform(std::span<const double> x, const AdapterParams& adapter,
                      std::span<double> out) {
  // Phase-2 features stay unnormalized so the identity transform reproduces
  // the linear probe bit for bit.
  adapt_into(x, adapter, out);
}

std::vector<double> logits_of(const LinearClassifier& model, std::span<const double> h) {
  std::vector<double> logits(model.num_classes());
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    const auto w = model.weights.row(c);
    double acc = model.bias[c];
    for (std::size_t j = 0; j < h.size(); ++j) {
      acc += w[j] * h[j];
    }
    logits[c] = acc;
  }
  return logits;
}

std::uint32_t predict(const LinearClassifier& model, std::span<const double> h) {
  const std::vector<double> logits = logits_of(model, h);
  return static_cast<std::uint32_t>(argmax(logits));
}

AdapterParams make_phase2_adapter(Phase2Mode mode, std::size_t dim, const Phase2Config& config) {
  switch (mode) {
    case Phase2Mode::linear_probe:
      return AdapterParams::make_identity(dim);
    case Phase2Mode::peft_surrogate:
      return AdapterParams::make_low_rank(dim, config.adapter_rank, config.residual_scale,
                                          derive_seed(config.seed, 11));
    case Phase2Mode::fft_surrogate:
      return AdapterParams::make_full(dim);
  }
  return AdapterParams::make_identity(dim);
}

}  // namespace

void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, const SgdConfig& config) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw DimensionError("sgd_step: parameter, gradient and velocity shapes must match");
  }
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (!std::isfinite(grads[j])) {
      throw DivergenceError("sgd_step: non-finite gradient");
    }
    velocity[j] = config.momentum * velocity[j] + grads[j] + config.weight_decay * params[j];
    params[j] -= config.lr * velocity[j];
  }
}

CrossEntropyLoss cross_entropy(std::span<const double> logits, std::uint32_t label) {
  if (logits.empty()) {
    throw EmptyInputError("cross_entropy: empty logits");
  }
  if (label >= logits.size()) {
    throw DimensionError("cross_entropy: label out of range");
  }
  CrossEntropyLoss out;
  out.grad = softmax_over_sims(logits, Temperature(1.0));
  out.value = -std::log(std::max(out.grad[label], 1e-300));
  out.grad[label] -= 1.0;
  return out;
}

const char* to_string(Phase2Mode mode) {
  switch (mode) {
    case Phase2Mode::linear_probe:
      return "linear_probe";
    case Phase2Mode::peft_surrogate:
      return "peft_surrogate";
    case Phase2Mode::fft_surrogate:
      return "fft_surrogate";
  }
  return "linear_probe";
}

Phase2Mode phase2_mode_from_string(const std::string& name) {
  if (name == "linear_probe" || name == "linear") {
    return Phase2Mode::linear_probe;
  }
  if (name == "peft_surrogate" || name == "peft") {
    return Phase2Mode::peft_surrogate;
  }
  if (name == "fft_surrogate" || name == "fft") {
    return Phase2Mode::fft_surrogate;
  }
  throw ConfigError("unknown phase-2 mode '" + name + "'");
}

void Phase2Config::validate() const {
  if (epochs < 0) {
    throw ConfigError("phase-2 epochs must be non-negative");
  }
  if (!(lr > 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("phase-2 lr must be positive and weight_decay non-negative");
  }
  if (!(momentum >= 0.0) || momentum >= 1.0) {
    throw ConfigError("phase-2 momentum must lie in [0, 1)");
  }
  if (batch_size == 0) {
    throw ConfigError("phase-2 batch_size must be positive");
  }
}

std::optional<double> Phase2Result::best_test_accuracy() const {
  std::optional<double> best;
  for (const Phase2EpochStats& row : trace) {
    if (row.test_accuracy && (!best || *row.test_accuracy > *best)) {
      best = row.test_accuracy;
    }
  }
  return best;
}

std::optional<double> Phase2Result::last_test_accuracy() const {
  if (trace.empty()) {
    return std::nullopt;
  }
  return trace.back().test_accuracy;
}

Phase2Result train_phase2(const LabeledDataset& train, const Mask& clean_mask,
                          const Phase2Config& config, const LabeledDataset* test) {
  train.validate();
  config.validate();
  if (clean_mask.size() != train.n) {
    throw DimensionError("clean mask length does not match dataset size");
  }
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < train.n; ++i) {
    if (clean_mask[i]) {
      active.push_back(i);
    }
  }
  if (active.empty()) {
    throw EmptyInputError("phase-2 training received an empty clean subset");
  }

  const std::size_t dim = train.dim;
  const std::size_t k = train.num_classes;

  Phase2Result result;
  result.classifier.weights = Matrix(k, dim);
  result.classifier.bias.assign(k, 0.0);
  result.adapter = make_phase2_adapter(config.mode, dim, config);

  const SgdConfig sgd{config.lr, config.momentum, config.weight_decay};
  std::vector<double> vel_weights(result.classifier.weights.data().size(), 0.0);
  std::vector<double> vel_bias(k, 0.0);
  std::vector<double> vel_down(result.adapter.down.data().size(), 0.0);
  std::vector<double> vel_up(result.adapter.up.data().size(), 0.0);
  std::vector<double> vel_dense(result.adapter.dense.data().size(), 0.0);

  Rng shuffle_rng(derive_seed(config.seed, 12));

  std::vector<double> x(dim);
  std::vector<double> h(dim);
  std::vector<double> grad_h(dim);
  std::vector<double> hidden(result.adapter.mode == AdapterMode::low_rank ? config.adapter_rank : 0);

  Matrix grad_weights(k, dim);
  std::vector<double> grad_bias(k, 0.0);
  AdapterParams grad_adapter = result.adapter.zeros_like();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(active);
    double epoch_loss_sum = 0.0;

    for (std::size_t start = 0; start < active.size(); start += config.batch_size) {
      const std::size_t end = std::min(active.size(), start + config.batch_size);
      const std::size_t batch_size = end - start;
      grad_weights.fill(0.0);
      std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
      grad_adapter.down.fill(0.0);
      grad_adapter.up.fill(0.0);
      grad_adapter.dense.fill(0.0);

      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = active[b];
        const auto raw = train.embedding(i);
        for (std::size_t j = 0; j < dim; ++j) {
          x[j] = static_cast<double>(raw[j]);
        }
        phase2_transform(x, result.adapter, h);
        const std::vector<double> logits = logits_of(result.classifier, h);
        const CrossEntropyLoss ce = cross_entropy(logits, train.given_labels[i]);
        epoch_loss_sum += ce.value;

        std::fill(grad_h.begin(), grad_h.end(), 0.0);
        for (std::size_t c = 0; c < k; ++c) {
          const double g = ce.grad[c];
          if (g == 0.0) {
            continue;
          }
          grad_bias[c] += g;
          auto gw = grad_weights.row(c);
          const auto w = result.classifier.weights.row(c);
          for (std::size_t j = 0; j < dim; ++j) {
            gw[j] += g * h[j];
            grad_h[j] += g * w[j];
          }
        }

        if (!config.freeze_transform) {
          switch (result.adapter.mode) {
            case AdapterMode::identity:
              break;
            case AdapterMode::low_rank: {
              const double scale = result.adapter.residual_scale;
              for (std::size_t r = 0; r < result.adapter.rank; ++r) {
                double acc = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                  acc += x[j] * result.adapter.down.at(j, r);
                }
                hidden[r] = acc;
              }
              for (std::size_t r = 0; r < result.adapter.rank; ++r) {
                double up_dot_grad = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                  up_dot_grad += result.adapter.up.at(r, j) * grad_h[j];
                  grad_adapter.up.at(r, j) += scale * hidden[r] * grad_h[j];
                }
                for (std::size_t j = 0; j < dim; ++j) {
                  grad_adapter.down.at(j, r) += scale * x[j] * up_dot_grad;
                }
              }
              break;
            }
            case AdapterMode::full: {
              for (std::size_t s = 0; s < dim; ++s) {
                const double xs = x[s];
                if (xs == 0.0) {
                  continue;
                }
                for (std::size_t j = 0; j < dim; ++j) {
                  grad_adapter.dense.at(s, j) += xs * grad_h[j];
                }
              }
              break;
            }
          }
        }
      }

      const double inv_batch = 1.0 / static_cast<double>(batch_size);
      for (double& v : grad_weights.data()) v *= inv_batch;
      for (double& v : grad_bias) v *= inv_batch;
      for (double& v : grad_adapter.down.data()) v *= inv_batch;
      for (double& v : grad_adapter.up.data()) v *= inv_batch;
      for (double& v : grad_adapter.dense.data()) v *= inv_batch;

      sgd_step(std::span<double>(result.classifier.weights.data()), grad_weights.data(),
               vel_weights, sgd);
      sgd_step(std::span<double>(result.classifier.bias), grad_bias, vel_bias, sgd);
      if (!config.freeze_transform) {
        switch (result.adapter.mode) {
          case AdapterMode::identity:
            break;
          case AdapterMode::low_rank:
            sgd_step(std::span<double>(result.adapter.down.data()), grad_adapter.down.data(),
                     vel_down, sgd);
            sgd_step(std::span<double>(result.adapter.up.data()), grad_adapter.up.data(), vel_up,
                     sgd);
            break;
          case AdapterMode::full:
            sgd_step(std::span<double>(result.adapter.dense.data()), grad_adapter.dense.data(),
                     vel_dense, sgd);
            break;
        }
      }
    }

    Phase2EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss_sum / static_cast<double>(active.size());
    if (!std::isfinite(stats.loss)) {
      throw DivergenceError("non-finite phase-2 loss at epoch " + std::to_string(epoch));
    }
    if (test != nullptr) {
      stats.test_accuracy = evaluate(result.classifier, result.adapter, *test);
    }
    result.trace.push_back(stats);
  }
  return result;
}

double evaluate(const LinearClassifier& model, const AdapterParams& adapter,
                const LabeledDataset& test) {
  test.validate();
  if (model.dim() != test.dim) {
    throw DimensionError("classifier dimension does not match test embeddings");
  }
  const std::vector<std::uint32_t>& labels =
      test.has_true_labels() ? *test.true_labels : test.given_labels;
  std::vector<double> x(test.dim);
  std::vector<double> h(test.dim);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.n; ++i) {
    const auto raw = test.embedding(i);
    for (std::size_t j = 0; j < test.dim; ++j) {
      x[j] = static_cast<double>(raw[j]);
    }
    phase2_transform(x, adapter, h);
    correct += predict(model, h) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(test.n);
}

std::vector<double> per_sample_losses(const LinearClassifier& model, const AdapterParams& adapter,
                                      const LabeledDataset& ds) {
  ds.validate();
  std::vector<double> losses(ds.n);
  std::vector<double> x(ds.dim);
  std::vector<double> h(ds.dim);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto raw = ds.embedding(i);
    for (std::size_t j = 0; j < ds.dim; ++j) {
      x[j] = static_cast<double>(raw[j]);
    }
    phase2_transform(x, adapter, h);
    losses[i] = cross_entropy(logits_of(model, h), ds.given_labels[i]).value;
  }
  return losses;
}

namespace {

constexpr char kModelMagic[8] = {'D', 'E', 'F', 'T', 'M', 'D', 'L', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  put_u32_le(out, bits);
}

void put_matrix(std::string& out, const Matrix& m) {
  for (const double v : m.data()) {
    put_f32_le(out, v);
  }
}

struct ModelReader {
  explicit ModelReader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32() {
    if (bytes_.size() - pos_ < 4) {
      throw ParseError(path_ + ": truncated checkpoint at byte " + std::to_string(pos_));
    }
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    }
    pos_ += 4;
    return v;
  }

  double f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return static_cast<double>(f);
  }

  Matrix matrix(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
      v = f32();
    }
    return m;
  }

  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_model(const LinearClassifier& model, const AdapterParams& adapter,
                const std::string& path) {
  std::string out;
  out.append(kModelMagic, 8);
  put_u32_le(out, static_cast<std::uint32_t>(model.num_classes()));
  put_u32_le(out, static_cast<std::uint32_t>(model.dim()));
  std::uint32_t mode = 0;
  switch (adapter.mode) {
    case AdapterMode::identity:
      mode = 0;
      break;
    case AdapterMode::low_rank:
      mode = 1;
      break;
    case AdapterMode::full:
      mode = 2;
      break;
  }
  put_u32_le(out, mode);
  put_u32_le(out, static_cast<std::uint32_t>(adapter.rank));
  put_f32_le(out, adapter.residual_scale);
  put_matrix(out, model.weights);
  for (const double v : model.bias) {
    put_f32_le(out, v);
  }
  if (adapter.mode == AdapterMode::low_rank) {
    put_matrix(out, adapter.down);
    put_matrix(out, adapter.up);
  } else if (adapter.mode == AdapterMode::full) {
    put_matrix(out, adapter.dense);
  }

  std::ofstream stream(path, std::ios::binary | std::ios::trunc);
  if (!stream) {
    throw IoError("cannot open " + path + " for writing");
  }
  stream.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!stream.good()) {
    throw IoError("failed writing " + path);
  }
}

std::pair<LinearClassifier, AdapterParams> load_model(const std::string& path) {
  std::ifstream stream(path, std::ios::binary);
  if (!stream) {
    throw IoError("cannot open " + path + " for reading");
  }
  std::string bytes((std::istreambuf_iterator<char>(stream)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kModelMagic, 8) != 0) {
    throw ParseError(path + ": bad magic, expected DEFTMDL1");
  }
  ModelReader reader(std::move(bytes), path);
  reader.pos_ = 8;
  const std::uint32_t k = reader.u32();
  const std::uint32_t dim = reader.u32();
  const std::uint32_t mode = reader.u32();
  const std::uint32_t rank = reader.u32();
  const double residual_scale = reader.f32();

  LinearClassifier model;
  model.weights = reader.matrix(k, dim);
  model.bias.resize(k);
  for (double& v : model.bias) {
    v = reader.f32();
  }

  AdapterParams adapter;
  if (mode == 0) {
    adapter = AdapterParams::make_identity(dim);
  } else if (mode == 1) {
    adapter = AdapterParams::make_low_rank(dim, rank, residual_scale, 0);
    adapter.down = reader.matrix(dim, rank);
    adapter.up = reader.matrix(rank, dim);
  } else if (mode == 2) {
    adapter = AdapterParams::make_full(dim);
    adapter.dense = reader.matrix(dim, dim);
  } else {
    throw ParseError(path + ": unknown adapter mode " + std::to_string(mode));
  }
  if (reader.pos_ != reader.bytes_.size()) {
    throw ParseError(path + ": trailing garbage at byte " + std::to_string(reader.pos_));
  }
  return {std::move(model), std::move(adapter)};
}

void write_phase2_trace(const std::vector<Phase2EpochStats>& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out << "epoch,loss,test_acc\n";
  for (const Phase2EpochStats& row : trace) {
    out << row.epoch << ',' << format_g9(row.loss) << ',';
    if (row.test_accuracy) {
      out << format_g9(*row.test_accuracy);
    }
    out << '\n';
  }
  if (!out.good()) {
    throw IoError("failed writing " + path);
  }
}

}  // namespace deft
