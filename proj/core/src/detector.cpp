#include "deft/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "deft/error.hpp"
#include "deft/format.hpp"

namespace deft {

namespace {

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double row_norm(std::span<const double> v) {
  return detail::norm_f64(v);
}

/// d cos(u, t) / d t, with s = cos(u, t) already computed.
void add_cosine_grad_wrt_t(std::span<const double> u, std::span<const double> t, double u_norm,
                           double t_norm, double s, double coef, std::span<double> grad) {
  const double a = coef / (u_norm * t_norm);
  const double b = coef * s / (t_norm * t_norm);
  for (std::size_t j = 0; j < t.size(); ++j) {
    grad[j] += a * u[j] - b * t[j];
  }
}

struct PromptGeometry {
  std::vector<double> positive_norms;
  std::vector<double> negative_norms;

  explicit PromptGeometry(const PromptPair& prompts) {
    positive_norms.resize(prompts.num_classes());
    negative_norms.resize(prompts.num_classes());
    for (std::size_t k = 0; k < prompts.num_classes(); ++k) {
      positive_norms[k] = row_norm(prompts.positive.row(k));
      negative_norms[k] = row_norm(prompts.negative.row(k));
      if (positive_norms[k] == 0.0 || negative_norms[k] == 0.0) {
        throw DegenerateInputError("prompt row " + std::to_string(k) + " has zero norm");
      }
    }
  }
};

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    acc += a[j] * b[j];
  }
  return acc;
}

void check_prompt_shapes(std::size_t dim, std::size_t num_classes, const PromptPair& prompts) {
  if (prompts.positive.cols() != dim || prompts.negative.cols() != dim) {
    throw DimensionError("prompt dimension " + std::to_string(prompts.positive.cols()) +
                         " does not match embedding dimension " + std::to_string(dim));
  }
  if (!prompts.positive.same_shape(prompts.negative)) {
    throw DimensionError("positive and negative prompt matrices must have identical shape");
  }
  if (prompts.num_classes() != num_classes) {
    throw DimensionError("prompt class count " + std::to_string(prompts.num_classes()) +
                         " does not match dataset class count " + std::to_string(num_classes));
  }
}

ZeroShotResult zero_shot_core(const Matrix& feats, const Matrix& positive, Temperature tau) {
  if (positive.cols() != feats.cols()) {
    throw DimensionError("prompt dimension does not match embedding dimension");
  }
  const std::size_t n = feats.rows();
  const std::size_t k = positive.rows();
  ZeroShotResult result;
  result.labels.resize(n);
  result.probabilities = Matrix(n, k);
  std::vector<double> prompt_norms(k);
  for (std::size_t c = 0; c < k; ++c) {
    prompt_norms[c] = row_norm(positive.row(c));
    if (prompt_norms[c] == 0.0) {
      throw DegenerateInputError("positive prompt row " + std::to_string(c) + " has zero norm");
    }
  }
  std::vector<double> sims(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = feats.row(i);
    const double u_norm = row_norm(u);
    if (u_norm == 0.0) {
      throw DegenerateInputError("embedding " + std::to_string(i) + " has zero norm");
    }
    for (std::size_t c = 0; c < k; ++c) {
      sims[c] = dot(u, positive.row(c)) / (u_norm * prompt_norms[c]);
    }
    softmax_over_sims(sims, tau, result.probabilities.row(i));
    result.labels[i] = static_cast<std::uint32_t>(argmax(sims));
  }
  return result;
}

SelectionResult select_core(const Matrix& feats, std::span<const std::uint32_t> given,
                            const PromptPair& prompts, Temperature tau,
                            bool consistency_constraint) {
  const std::size_t n = feats.rows();
  check_prompt_shapes(feats.cols(), prompts.num_classes(), prompts);
  const PromptGeometry geom(prompts);

  const ZeroShotResult zs = zero_shot_core(feats, prompts.positive, tau);

  SelectionResult result;
  result.clean_mask.assign(n, 0);
  result.pos_sim.resize(n);
  result.threshold.resize(n);
  result.clean_prob.resize(n);
  result.pseudo_labels = zs.labels;
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = feats.row(i);
    const double u_norm = row_norm(u);
    const std::uint32_t y = given[i];
    const double s_pos = dot(u, prompts.positive.row(y)) / (u_norm * geom.positive_norms[y]);
    const double s_neg = dot(u, prompts.negative.row(y)) / (u_norm * geom.negative_norms[y]);
    result.pos_sim[i] = s_pos;
    result.threshold[i] = s_neg;
    result.clean_prob[i] = sigmoid((s_pos - s_neg) / tau.value());
    bool clean = s_pos > s_neg;
    if (consistency_constraint) {
      clean = clean && zs.labels[i] == y;
    }
    result.clean_mask[i] = clean ? 1 : 0;
  }
  return result;
}

struct DualPromptBatchLoss {
  double total = 0.0;  // sum over the batch, not yet averaged
  Matrix grad_positive;
  Matrix grad_negative;
};

// Sum of per-sample dual-prompt losses over `indices` of `feats`; gradients
// are also un-averaged sums so the caller picks the normalization.
DualPromptBatchLoss loss_dp_core(const Matrix& feats, std::span<const std::size_t> indices,
                                 std::span<const std::uint32_t> pseudo,
                                 std::span<const std::uint32_t> complementary,
                                 const PromptPair& prompts, Temperature tau, double lambda_pos) {
  const PromptGeometry geom(prompts);
  const double inv_tau = 1.0 / tau.value();
  DualPromptBatchLoss out;
  out.grad_positive = Matrix(prompts.num_classes(), prompts.dim());
  out.grad_negative = Matrix(prompts.num_classes(), prompts.dim());

  for (const std::size_t i : indices) {
    const auto u = feats.row(i);
    const double u_norm = row_norm(u);
    if (u_norm == 0.0) {
      throw DegenerateInputError("embedding " + std::to_string(i) + " has zero norm");
    }

    // One clean-probability evaluation for class k; returns d loss / d z
    // pre-multiplied for the requested term.
    const auto eval_term = [&](std::uint32_t k, bool positive_term, double weight) {
      const auto t_pos = prompts.positive.row(k);
      const auto t_neg = prompts.negative.row(k);
      const double s_pos = dot(u, t_pos) / (u_norm * geom.positive_norms[k]);
      const double s_neg = dot(u, t_neg) / (u_norm * geom.negative_norms[k]);
      const double z = (s_pos - s_neg) * inv_tau;
      const double p = sigmoid(z);
      const double q = clamp_prob(p);
      const bool in_range = p > kProbClamp && p < 1.0 - kProbClamp;
      double dz;
      if (positive_term) {
        out.total += weight * -std::log(q);
        dz = in_range ? weight * (p - 1.0) : 0.0;
      } else {
        out.total += weight * -std::log(1.0 - q);
        dz = in_range ? weight * p : 0.0;
      }
      if (dz != 0.0) {
        add_cosine_grad_wrt_t(u, t_pos, u_norm, geom.positive_norms[k], s_pos, dz * inv_tau,
                              out.grad_positive.row(k));
        add_cosine_grad_wrt_t(u, t_neg, u_norm, geom.negative_norms[k], s_neg, -dz * inv_tau,
                              out.grad_negative.row(k));
      }
    };

    eval_term(pseudo[i], true, lambda_pos);
    eval_term(complementary[i], false, 1.0);
  }
  return out;
}

struct AlignmentBatchLoss {
  double total = 0.0;  // un-averaged sum
  Matrix grad_positive;
  AdapterParams grad_adapter;
};

AlignmentBatchLoss loss_sim_core(const Matrix& raw_feats, std::span<const std::size_t> subset,
                                 std::span<const std::uint32_t> targets,
                                 const Matrix& positive_prompts, Temperature tau,
                                 const AdapterParams& adapter) {
  if (subset.empty()) {
    throw EmptyInputError("loss_sim: empty subset");
  }
  if (positive_prompts.cols() != raw_feats.cols()) {
    throw DimensionError("prompt dimension does not match embedding dimension");
  }
  const std::size_t k = positive_prompts.rows();
  const std::size_t dim = raw_feats.cols();
  const double inv_tau = 1.0 / tau.value();

  std::vector<double> prompt_norms(k);
  for (std::size_t c = 0; c < k; ++c) {
    prompt_norms[c] = row_norm(positive_prompts.row(c));
    if (prompt_norms[c] == 0.0) {
      throw DegenerateInputError("positive prompt row " + std::to_string(c) + " has zero norm");
    }
  }

  AlignmentBatchLoss out;
  out.grad_positive = Matrix(k, dim);
  out.grad_adapter = adapter.zeros_like();

  std::vector<double> u(dim);
  std::vector<double> sims(k);
  std::vector<double> probs(k);
  std::vector<double> grad_u(dim);
  std::vector<double> hidden(adapter.mode == AdapterMode::low_rank ? adapter.rank : 0);

  for (const std::size_t i : subset) {
    const auto x = raw_feats.row(i);
    adapt_into(x, adapter, u);
    const double u_norm = row_norm(u);
    if (u_norm == 0.0) {
      throw DegenerateInputError("adapted embedding " + std::to_string(i) + " has zero norm");
    }
    for (std::size_t c = 0; c < k; ++c) {
      sims[c] = dot(u, positive_prompts.row(c)) / (u_norm * prompt_norms[c]);
    }
    softmax_over_sims(sims, tau, probs);
    const std::uint32_t target = targets[i];
    out.total += -std::log(std::max(probs[target], 1e-300));

    // d loss / d sims = (softmax - onehot) / tau, then through the cosine
    // into the prompts and the adapted embedding.
    std::fill(grad_u.begin(), grad_u.end(), 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      const double coef = (probs[c] - (c == target ? 1.0 : 0.0)) * inv_tau;
      if (coef == 0.0) {
        continue;
      }
      const auto t = positive_prompts.row(c);
      add_cosine_grad_wrt_t(u, t, u_norm, prompt_norms[c], sims[c], coef,
                            out.grad_positive.row(c));
      const double a = coef / (u_norm * prompt_norms[c]);
      const double b = coef * sims[c] / (u_norm * u_norm);
      for (std::size_t j = 0; j < dim; ++j) {
        grad_u[j] += a * t[j] - b * u[j];
      }
    }

    switch (adapter.mode) {
      case AdapterMode::identity:
        break;
      case AdapterMode::low_rank: {
        // u = x + scale * (x . down) . up
        const double scale = adapter.residual_scale;
        for (std::size_t r = 0; r < adapter.rank; ++r) {
          double acc = 0.0;
          for (std::size_t j = 0; j < dim; ++j) {
            acc += x[j] * adapter.down.at(j, r);
          }
          hidden[r] = acc;
        }
        for (std::size_t r = 0; r < adapter.rank; ++r) {
          double up_dot_grad = 0.0;
          for (std::size_t j = 0; j < dim; ++j) {
            up_dot_grad += adapter.up.at(r, j) * grad_u[j];
            out.grad_adapter.up.at(r, j) += scale * hidden[r] * grad_u[j];
          }
          for (std::size_t j = 0; j < dim; ++j) {
            out.grad_adapter.down.at(j, r) += scale * x[j] * up_dot_grad;
          }
        }
        break;
      }
      case AdapterMode::full: {
        // u = x . dense
        for (std::size_t s = 0; s < dim; ++s) {
          const double xs = x[s];
          if (xs == 0.0) {
            continue;
          }
          for (std::size_t j = 0; j < dim; ++j) {
            out.grad_adapter.dense.at(s, j) += xs * grad_u[j];
          }
        }
        break;
      }
    }
  }
  return out;
}

Matrix adapt_all(const Matrix& raw, const AdapterParams& adapter) {
  if (adapter.mode == AdapterMode::identity) {
    return raw;
  }
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    adapt_into(raw.row(i), adapter, out.row(i));
  }
  return out;
}

void scale_matrix(Matrix& m, double factor) {
  for (double& v : m.data()) {
    v *= factor;
  }
}

void sgd_block(std::span<double> params, std::span<const double> grads,
               std::vector<double>& velocity, double lr, double momentum, double weight_decay,
               const std::string& where) {
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (!std::isfinite(grads[j])) {
      throw DivergenceError("non-finite gradient in " + where);
    }
    velocity[j] = momentum * velocity[j] + grads[j] + weight_decay * params[j];
    params[j] -= lr * velocity[j];
  }
}

}  // namespace

void DetectorConfig::validate() const {
  if (!std::isfinite(tau) || tau <= 0.0) {
    throw ConfigError("detector tau must be positive");
  }
  if (warmup_epochs < 0 || detect_epochs < 0 || warmup_epochs > detect_epochs) {
    throw ConfigError("detector epochs must satisfy 0 <= warmup_epochs <= detect_epochs");
  }
  if (!(lr > 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("detector lr must be positive and weight_decay non-negative");
  }
  if (!(momentum >= 0.0) || momentum >= 1.0) {
    throw ConfigError("detector momentum must lie in [0, 1)");
  }
  if (batch_size == 0) {
    throw ConfigError("detector batch_size must be positive");
  }
  if (!(lambda_pos > 0.0) || lambda_pos > 1.0) {
    throw ConfigError("detector lambda_pos must lie in (0, 1]");
  }
}

DetectorConfig severe_noise_preset(DetectorConfig base) {
  base.lambda_pos = 0.25;
  base.lr = 1e-2;
  return base;
}

std::size_t SelectionResult::selected_count() const {
  std::size_t count = 0;
  for (const std::uint8_t v : clean_mask) {
    count += v ? 1 : 0;
  }
  return count;
}

ZeroShotResult zero_shot_predict(const LabeledDataset& ds, const Matrix& positive_prompts,
                                 Temperature tau) {
  return zero_shot_core(to_f64_matrix(ds), positive_prompts, tau);
}

double threshold(const LabeledDataset& ds, const PromptPair& prompts, std::size_t index) {
  if (index >= ds.n) {
    throw DimensionError("threshold: sample index out of range");
  }
  check_prompt_shapes(ds.dim, ds.num_classes, prompts);
  const auto x = ds.embedding(index);
  const auto t = prompts.negative.row(ds.given_labels[index]);
  return cosine_sim(std::span<const float>(x), std::span<const double>(t));
}

std::vector<double> clean_probability(const LabeledDataset& ds, const PromptPair& prompts,
                                      Temperature tau) {
  const SelectionResult sel = select_clean(ds, prompts, tau, false);
  return sel.clean_prob;
}

SelectionResult select_clean(const LabeledDataset& ds, const PromptPair& prompts, Temperature tau,
                             bool consistency_constraint) {
  return select_core(to_f64_matrix(ds), ds.given_labels, prompts, tau, consistency_constraint);
}

std::vector<std::uint32_t> sample_complementary_labels(const LabeledDataset& ds,
                                                       std::span<const std::uint32_t> pseudo_labels,
                                                       Rng& rng) {
  const std::size_t k = ds.num_classes;
  if (k < 2) {
    throw ConfigError("complementary labels need at least 2 classes");
  }
  if (pseudo_labels.size() != ds.n) {
    throw DimensionError("pseudo label count does not match dataset size");
  }
  std::vector<std::uint32_t> out(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::uint32_t y = ds.given_labels[i];
    const std::uint32_t pseudo = pseudo_labels[i];
    bool exclude_pseudo = true;
    std::size_t allowed = y == pseudo ? k - 1 : k - 2;
    if (allowed == 0) {  // only possible for k == 2 with y != pseudo
      exclude_pseudo = false;
      allowed = k - 1;
    }
    std::size_t draw = static_cast<std::size_t>(rng.uniform_int(allowed));
    std::uint32_t chosen = 0;
    for (std::uint32_t c = 0; c < k; ++c) {
      if (c == y || (exclude_pseudo && c == pseudo)) {
        continue;
      }
      if (draw == 0) {
        chosen = c;
        break;
      }
      --draw;
    }
    out[i] = chosen;
  }
  return out;
}

DualPromptLoss loss_dp(const LabeledDataset& ds, const PromptPair& prompts, Temperature tau,
                       std::span<const std::uint32_t> pseudo_labels,
                       std::span<const std::uint32_t> complementary_labels, double lambda_pos) {
  check_prompt_shapes(ds.dim, ds.num_classes, prompts);
  if (pseudo_labels.size() != ds.n || complementary_labels.size() != ds.n) {
    throw DimensionError("label sequences must cover every sample");
  }
  const Matrix feats = to_f64_matrix(ds);
  std::vector<std::size_t> all(ds.n);
  std::iota(all.begin(), all.end(), 0);
  DualPromptBatchLoss batch =
      loss_dp_core(feats, all, pseudo_labels, complementary_labels, prompts, tau, lambda_pos);
  const double inv_n = 1.0 / static_cast<double>(ds.n);
  scale_matrix(batch.grad_positive, inv_n);
  scale_matrix(batch.grad_negative, inv_n);
  return {batch.total * inv_n, std::move(batch.grad_positive), std::move(batch.grad_negative)};
}

AlignmentLoss loss_sim(const LabeledDataset& ds, std::span<const std::size_t> subset,
                       std::span<const std::uint32_t> targets, const Matrix& positive_prompts,
                       Temperature tau, const AdapterParams& adapter) {
  if (subset.empty()) {
    throw EmptyInputError("loss_sim: empty subset");
  }
  if (targets.size() != ds.n) {
    throw DimensionError("target labels must cover every sample");
  }
  const Matrix feats = to_f64_matrix(ds);
  AlignmentBatchLoss batch = loss_sim_core(feats, subset, targets, positive_prompts, tau, adapter);
  const double inv_m = 1.0 / static_cast<double>(subset.size());
  scale_matrix(batch.grad_positive, inv_m);
  scale_matrix(batch.grad_adapter.down, inv_m);
  scale_matrix(batch.grad_adapter.up, inv_m);
  scale_matrix(batch.grad_adapter.dense, inv_m);
  return {batch.total * inv_m, std::move(batch.grad_positive), std::move(batch.grad_adapter)};
}

PromptPair init_prompts(const LabeledDataset& ds, std::uint64_t seed) {
  ds.validate();
  const std::size_t k = ds.num_classes;
  const std::size_t dim = ds.dim;
  Rng rng(seed);

  PromptPair prompts;
  prompts.positive = Matrix(k, dim);
  prompts.negative = Matrix(k, dim);

  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::uint32_t y = ds.given_labels[i];
    ++counts[y];
    const auto x = ds.embedding(i);
    auto row = prompts.positive.row(y);
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] += static_cast<double>(x[j]);
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto row = prompts.positive.row(c);
    if (counts[c] == 0) {
      for (std::size_t j = 0; j < dim; ++j) {
        row[j] = rng.normal();
      }
    }
    normalize_in_place(row);
  }

  // Negative prompt: mean of the other classes' positives, nudged off the
  // exact mean so positive and negative never start symmetric.
  for (std::size_t c = 0; c < k; ++c) {
    auto row = prompts.negative.row(c);
    for (std::size_t other = 0; other < k; ++other) {
      if (other == c) {
        continue;
      }
      const auto pos = prompts.positive.row(other);
      for (std::size_t j = 0; j < dim; ++j) {
        row[j] += pos[j];
      }
    }
    if (k > 1) {
      normalize_in_place(row);
    }
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] += 0.01 * rng.normal();
    }
    normalize_in_place(row);
  }
  return prompts;
}

DetectorResult train_detector(const LabeledDataset& ds, const DetectorConfig& config,
                              AdapterParams adapter) {
  ds.validate();
  config.validate();
  if (ds.num_classes < 2) {
    throw ConfigError("detector training needs at least 2 classes");
  }
  adapter.validate();
  if (adapter.mode != AdapterMode::identity && adapter.dim != ds.dim) {
    throw DimensionError("adapter dimension does not match dataset embedding dimension");
  }

  const Temperature tau(config.tau);
  const Matrix raw = to_f64_matrix(ds);
  const std::optional<Mask> truth =
      ds.has_true_labels() ? std::optional<Mask>(true_clean_mask(ds)) : std::nullopt;

  DetectorResult result;
  result.prompts = init_prompts(ds, derive_seed(config.seed, 1));
  result.adapter = std::move(adapter);

  Rng shuffle_rng(derive_seed(config.seed, 2));
  Rng complementary_rng(derive_seed(config.seed, 3));

  // One velocity buffer per parameter block.
  std::vector<double> vel_pos(result.prompts.positive.data().size(), 0.0);
  std::vector<double> vel_neg(result.prompts.negative.data().size(), 0.0);
  std::vector<double> vel_down(result.adapter.down.data().size(), 0.0);
  std::vector<double> vel_up(result.adapter.up.data().size(), 0.0);
  std::vector<double> vel_dense(result.adapter.dense.data().size(), 0.0);

  std::vector<std::size_t> order(ds.n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.detect_epochs; ++epoch) {
    const bool warmup = epoch <= config.warmup_epochs;

    const Matrix adapted = adapt_all(raw, result.adapter);
    std::vector<std::uint32_t> pseudo;
    Mask sim_domain;  // samples eligible for the alignment loss this epoch
    if (warmup) {
      pseudo = ds.given_labels;
      sim_domain.assign(ds.n, 1);
    } else {
      pseudo = zero_shot_core(adapted, result.prompts.positive, tau).labels;
      const SelectionResult selection = select_core(adapted, ds.given_labels, result.prompts, tau,
                                                    config.consistency_constraint);
      sim_domain = selection.clean_mask;
    }
    // Positive targets: given labels while warming up, pseudo labels after.
    const std::vector<std::uint32_t>& sim_targets = warmup ? ds.given_labels : pseudo;
    const std::vector<std::uint32_t> complementary =
        sample_complementary_labels(ds, pseudo, complementary_rng);

    shuffle_rng.shuffle(order);

    double epoch_dp_sum = 0.0;
    double epoch_sim_sum = 0.0;
    std::size_t epoch_sim_count = 0;
    std::vector<std::size_t> sim_batch;
    for (std::size_t start = 0, batch_index = 0; start < ds.n;
         start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(ds.n, start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);

      Matrix batch_adapted(batch.size(), ds.dim);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        adapt_into(raw.row(batch[b]), result.adapter, batch_adapted.row(b));
      }
      std::vector<std::size_t> local(batch.size());
      std::iota(local.begin(), local.end(), 0);
      std::vector<std::uint32_t> batch_pseudo(batch.size());
      std::vector<std::uint32_t> batch_comp(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        batch_pseudo[b] = pseudo[batch[b]];
        batch_comp[b] = complementary[batch[b]];
      }
      DualPromptBatchLoss dp = loss_dp_core(batch_adapted, local, batch_pseudo, batch_comp,
                                            result.prompts, tau, config.lambda_pos);
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      scale_matrix(dp.grad_positive, inv_batch);
      scale_matrix(dp.grad_negative, inv_batch);
      epoch_dp_sum += dp.total;

      sim_batch.clear();
      for (const std::size_t i : batch) {
        if (sim_domain[i]) {
          sim_batch.push_back(i);
        }
      }
      AdapterParams adapter_grad = result.adapter.zeros_like();
      if (!sim_batch.empty()) {
        AlignmentBatchLoss sim = loss_sim_core(raw, sim_batch, sim_targets,
                                               result.prompts.positive, tau, result.adapter);
        epoch_sim_sum += sim.total;
        epoch_sim_count += sim_batch.size();
        const double inv_sim = 1.0 / static_cast<double>(sim_batch.size());
        scale_matrix(sim.grad_positive, inv_sim);
        scale_matrix(sim.grad_adapter.down, inv_sim);
        scale_matrix(sim.grad_adapter.up, inv_sim);
        scale_matrix(sim.grad_adapter.dense, inv_sim);
        for (std::size_t j = 0; j < dp.grad_positive.data().size(); ++j) {
          dp.grad_positive.data()[j] += sim.grad_positive.data()[j];
        }
        adapter_grad = std::move(sim.grad_adapter);
      }

      if (!std::isfinite(dp.total) || !std::isfinite(epoch_sim_sum)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
      }

      const std::string where =
          "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
      sgd_block(std::span<double>(result.prompts.positive.data()), dp.grad_positive.data(),
                vel_pos, config.lr, config.momentum, config.weight_decay, where);
      sgd_block(std::span<double>(result.prompts.negative.data()), dp.grad_negative.data(),
                vel_neg, config.lr, config.momentum, config.weight_decay, where);
      switch (result.adapter.mode) {
        case AdapterMode::identity:
          break;
        case AdapterMode::low_rank:
          sgd_block(std::span<double>(result.adapter.down.data()), adapter_grad.down.data(),
                    vel_down, config.lr, config.momentum, config.weight_decay, where);
          sgd_block(std::span<double>(result.adapter.up.data()), adapter_grad.up.data(), vel_up,
                    config.lr, config.momentum, config.weight_decay, where);
          break;
        case AdapterMode::full:
          sgd_block(std::span<double>(result.adapter.dense.data()), adapter_grad.dense.data(),
                    vel_dense, config.lr, config.momentum, config.weight_decay, where);
          break;
      }
      normalize_rows(result.prompts.positive);
      normalize_rows(result.prompts.negative);
    }

    const Matrix adapted_after = adapt_all(raw, result.adapter);
    const SelectionResult epoch_selection = select_core(
        adapted_after, ds.given_labels, result.prompts, tau, config.consistency_constraint);
    DetectorEpochStats stats;
    stats.epoch = epoch;
    stats.loss_dp = epoch_dp_sum / static_cast<double>(ds.n);
    stats.loss_sim = epoch_sim_count == 0 ? 0.0 : epoch_sim_sum / static_cast<double>(epoch_sim_count);
    stats.n_selected = epoch_selection.selected_count();
    if (truth) {
      stats.metrics = selection_metrics(epoch_selection.clean_mask, *truth);
    }
    result.trace.push_back(stats);
  }

  const Matrix adapted_final = adapt_all(raw, result.adapter);
  result.selection = select_core(adapted_final, ds.given_labels, result.prompts, tau,
                                 config.consistency_constraint);
  return result;
}

void write_detector_trace(const std::vector<DetectorEpochStats>& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out << "epoch,loss_dp,loss_sim,n_selected,precision,recall,f1\n";
  const auto fmt = [](double v) { return format_g9(v); };
  for (const DetectorEpochStats& row : trace) {
    out << row.epoch << ',' << fmt(row.loss_dp) << ',' << fmt(row.loss_sim) << ','
        << row.n_selected << ',';
    if (row.metrics) {
      out << fmt(row.metrics->precision) << ',' << fmt(row.metrics->recall) << ','
          << fmt(row.metrics->f1);
    } else {
      out << ",,";
    }
    out << '\n';
  }
  if (!out.good()) {
    throw IoError("failed writing " + path);
  }
}

}  // namespace deft
