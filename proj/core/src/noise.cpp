#include "deft/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "deft/error.hpp"
#include "deft/rng.hpp"

namespace deft {

namespace {

void require_corruptible(const LabeledDataset& ds, double ratio) {
  ds.validate();
  if (!ds.has_true_labels()) {
    throw DataValidationError("noise injection needs a dataset with true labels");
  }
  if (!(ratio >= 0.0) || ratio >= 1.0) {
    throw ConfigError("noise ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  if (ratio > 0.0 && ds.num_classes < 2) {
    throw ConfigError("cannot corrupt labels with fewer than 2 classes");
  }
}

Matrix symmetric_transition(std::size_t num_classes, double ratio) {
  Matrix t(num_classes, num_classes);
  const double off = num_classes > 1 ? ratio / static_cast<double>(num_classes - 1) : 0.0;
  for (std::size_t i = 0; i < num_classes; ++i) {
    for (std::size_t j = 0; j < num_classes; ++j) {
      t.at(i, j) = i == j ? 1.0 - ratio : off;
    }
  }
  return t;
}

Matrix empirical_transition(const LabeledDataset& ds) {
  const std::size_t k = ds.num_classes;
  Matrix t(k, k);
  std::vector<std::size_t> class_counts(k, 0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::uint32_t truth = (*ds.true_labels)[i];
    ++class_counts[truth];
    t.at(truth, ds.given_labels[i]) += 1.0;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (class_counts[i] == 0) {
      t.at(i, i) = 1.0;  // keep empty-class rows stochastic
      continue;
    }
    for (std::size_t j = 0; j < k; ++j) {
      t.at(i, j) /= static_cast<double>(class_counts[i]);
    }
  }
  return t;
}

}  // namespace

const char* to_string(NoiseFamily family) {
  return family == NoiseFamily::symmetric ? "symmetric" : "instance_dependent";
}

NoiseFamily noise_family_from_string(const std::string& name) {
  if (name == "symmetric") {
    return NoiseFamily::symmetric;
  }
  if (name == "instance_dependent" || name == "instance") {
    return NoiseFamily::instance_dependent;
  }
  throw ConfigError("unknown noise family '" + name + "'");
}

std::pair<LabeledDataset, NoiseSpec> inject_symmetric_noise(const LabeledDataset& ds, double ratio,
                                                            std::uint64_t seed) {
  require_corruptible(ds, ratio);
  LabeledDataset out = ds;
  out.given_labels = *ds.true_labels;  // corruption always starts from the truth

  const std::size_t n_flip = static_cast<std::size_t>(static_cast<double>(ds.n) * ratio);
  Rng rng(seed);
  if (n_flip > 0) {
    // Partial Fisher-Yates: the first n_flip entries are a uniform subset.
    std::vector<std::size_t> order(ds.n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < n_flip; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(ds.n - i));
      std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < n_flip; ++i) {
      const std::size_t idx = order[i];
      const std::uint32_t truth = (*ds.true_labels)[idx];
      // Uniform over the K-1 wrong classes.
      std::uint32_t wrong = static_cast<std::uint32_t>(rng.uniform_int(ds.num_classes - 1));
      if (wrong >= truth) {
        ++wrong;
      }
      out.given_labels[idx] = wrong;
    }
  }

  NoiseSpec spec;
  spec.family = NoiseFamily::symmetric;
  spec.target_ratio = ratio;
  spec.realized_ratio = static_cast<double>(n_flip) / static_cast<double>(ds.n);
  spec.transition_matrix = symmetric_transition(ds.num_classes, ratio);
  spec.seed = seed;
  return {std::move(out), spec};
}

std::pair<LabeledDataset, NoiseSpec> inject_instance_noise(const LabeledDataset& ds, double ratio,
                                                           std::uint64_t seed) {
  require_corruptible(ds, ratio);
  LabeledDataset out = ds;
  out.given_labels = *ds.true_labels;

  NoiseSpec spec;
  spec.family = NoiseFamily::instance_dependent;
  spec.target_ratio = ratio;
  spec.seed = seed;

  if (ratio == 0.0) {
    spec.realized_ratio = 0.0;
    spec.transition_matrix = symmetric_transition(ds.num_classes, 0.0);
    return {std::move(out), spec};
  }

  const std::size_t n = ds.n;
  const std::size_t k = ds.num_classes;

  // One random direction per class, shared across the dataset.
  Rng direction_rng(derive_seed(seed, 0));
  Matrix directions(k, ds.dim);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t t = 0; t < ds.dim; ++t) {
      directions.at(c, t) = direction_rng.normal();
    }
  }

  // Per-sample propensity sigmoid(a_i) and wrong-class distribution.
  std::vector<double> propensity(n);
  std::vector<double> flip_draw(n);
  Matrix wrong_class_probs(n, k);
  std::vector<double> scores(k);
  std::vector<double> wrong_scores;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = ds.embedding(i);
    for (std::size_t c = 0; c < k; ++c) {
      double dot = 0.0;
      for (std::size_t t = 0; t < ds.dim; ++t) {
        dot += static_cast<double>(x[t]) * directions.at(c, t);
      }
      scores[c] = dot;
    }
    const std::uint32_t truth = (*ds.true_labels)[i];
    wrong_scores.clear();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != truth) {
        wrong_scores.push_back(scores[c]);
      }
    }
    propensity[i] = sigmoid(logsumexp(wrong_scores) - scores[truth]);

    std::vector<double> probs = softmax_over_sims(wrong_scores, Temperature(1.0));
    std::size_t w = 0;
    for (std::size_t c = 0; c < k; ++c) {
      wrong_class_probs.at(i, c) = c == truth ? 0.0 : probs[w++];
    }

    // Decisions draw from a per-index sub-stream, so a sample's outcome
    // depends only on (embedding, true label, index, seed).
    Rng sample_rng(derive_seed(seed, 1 + i));
    flip_draw[i] = sample_rng.uniform();
  }

  // Bisection on the shared multiplier m: sample i flips iff
  // flip_draw[i] < min(1, m * propensity[i]), so the flip count is monotone
  // non-decreasing in m.
  const auto flip_count = [&](double m) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      count += flip_draw[i] < std::min(1.0, m * propensity[i]) ? 1 : 0;
    }
    return count;
  };
  const double tolerance = 0.02;
  const auto lo_target = static_cast<std::size_t>(
      std::ceil(std::max(0.0, ratio - tolerance) * static_cast<double>(n)));
  const auto hi_target = static_cast<std::size_t>(
      std::floor((ratio + tolerance) * static_cast<double>(n)));
  double lo = 0.0;
  double hi = 1.0;
  while (flip_count(hi) < lo_target && hi < 1e12) {
    hi *= 2.0;
  }
  double multiplier = hi;
  std::size_t realized = flip_count(hi);
  bool calibrated = realized >= lo_target && realized <= hi_target;
  for (int iter = 0; iter < 100 && !calibrated; ++iter) {
    multiplier = 0.5 * (lo + hi);
    realized = flip_count(multiplier);
    if (realized < lo_target) {
      lo = multiplier;
    } else if (realized > hi_target) {
      hi = multiplier;
    } else {
      calibrated = true;
    }
  }
  if (!calibrated) {
    throw CalibrationError("instance noise calibration failed to reach ratio " +
                           std::to_string(ratio) + " +- " + std::to_string(tolerance) +
                           " within 100 bisection steps (got " +
                           std::to_string(static_cast<double>(realized) / static_cast<double>(n)) +
                           ")");
  }

  std::size_t flipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (flip_draw[i] >= std::min(1.0, multiplier * propensity[i])) {
      continue;
    }
    // Second draw of the same per-index sub-stream picks the destination.
    Rng sample_rng(derive_seed(seed, 1 + i));
    sample_rng.uniform();
    const double u = sample_rng.uniform();
    double cumulative = 0.0;
    std::uint32_t destination = (*ds.true_labels)[i];
    for (std::size_t c = 0; c < k; ++c) {
      cumulative += wrong_class_probs.at(i, c);
      if (u < cumulative) {
        destination = static_cast<std::uint32_t>(c);
        break;
      }
    }
    if (destination == (*ds.true_labels)[i]) {
      // Cumulative rounding left u unassigned; take the last wrong class.
      for (std::size_t c = k; c-- > 0;) {
        if (c != (*ds.true_labels)[i] && wrong_class_probs.at(i, c) > 0.0) {
          destination = static_cast<std::uint32_t>(c);
          break;
        }
      }
    }
    out.given_labels[i] = destination;
    ++flipped;
  }

  spec.realized_ratio = static_cast<double>(flipped) / static_cast<double>(n);
  spec.transition_matrix = empirical_transition(out);
  return {std::move(out), spec};
}

NoiseSpec describe_existing_noise(const LabeledDataset& ds, NoiseFamily family,
                                  double target_ratio) {
  ds.validate();
  NoiseSpec spec;
  spec.family = family;
  spec.target_ratio = target_ratio;
  spec.seed = 0;
  if (ds.has_true_labels()) {
    spec.realized_ratio = ds.noise_fraction();
    spec.transition_matrix = empirical_transition(ds);
  } else {
    spec.realized_ratio = target_ratio;
    spec.transition_matrix = symmetric_transition(ds.num_classes, 0.0);
  }
  return spec;
}

}  // namespace deft
