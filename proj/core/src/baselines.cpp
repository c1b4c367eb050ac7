#include "deft/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "deft/detector.hpp"
#include "deft/error.hpp"

namespace deft {

namespace {

constexpr double kVarianceFloor = 1e-6;

double log_normal_pdf(double x, double mean, double variance) {
  const double diff = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + diff * diff / variance);
}

}  // namespace

double GmmModel::posterior_clean(double loss) const {
  const std::size_t clean = clean_component();
  const std::size_t other = 1 - clean;
  const double log_clean = std::log(weights[clean]) + log_normal_pdf(loss, means[clean], variances[clean]);
  const double log_other = std::log(weights[other]) + log_normal_pdf(loss, means[other], variances[other]);
  // Stable two-way softmax of the log joint densities.
  return sigmoid(log_clean - log_other);
}

Mask select_label_match(const LabeledDataset& ds, const Matrix& anchors, Temperature tau) {
  ds.validate();
  if (anchors.rows() != ds.num_classes) {
    throw DimensionError("anchor count does not match the class count");
  }
  const ZeroShotResult zs = zero_shot_predict(ds, anchors, tau);
  Mask mask(ds.n, 0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    mask[i] = zs.labels[i] == ds.given_labels[i] ? 1 : 0;
  }
  return mask;
}

Mask select_small_loss(std::span<const double> losses, double noise_ratio,
                       const std::vector<std::vector<std::size_t>>& batches) {
  if (!(noise_ratio >= 0.0) || noise_ratio >= 1.0) {
    throw ConfigError("small-loss noise ratio must lie in [0, 1)");
  }
  Mask mask(losses.size(), 0);
  std::vector<std::uint8_t> seen(losses.size(), 0);
  std::size_t covered = 0;
  for (const std::vector<std::size_t>& batch : batches) {
    for (const std::size_t i : batch) {
      if (i >= losses.size() || seen[i]) {
        throw ConfigError("small-loss batches must partition the index set");
      }
      seen[i] = 1;
    }
    covered += batch.size();
    if (batch.empty()) {
      continue;
    }
    const std::size_t keep = static_cast<std::size_t>(
        std::ceil((1.0 - noise_ratio) * static_cast<double>(batch.size())));
    std::vector<std::size_t> order = batch;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (losses[a] != losses[b]) {
        return losses[a] < losses[b];
      }
      return a < b;  // deterministic tie rule
    });
    for (std::size_t r = 0; r < keep && r < order.size(); ++r) {
      mask[order[r]] = 1;
    }
  }
  if (covered != losses.size()) {
    throw ConfigError("small-loss batches must cover every index");
  }
  return mask;
}

Mask select_small_loss_global(std::span<const double> losses, double noise_ratio) {
  std::vector<std::size_t> all(losses.size());
  std::iota(all.begin(), all.end(), 0);
  return select_small_loss(losses, noise_ratio, {all});
}

GmmModel fit_gmm_em(std::span<const double> losses, std::size_t max_iters, double tol,
                    std::uint64_t seed) {
  (void)seed;
  const std::size_t n = losses.size();
  if (n < 4) {
    throw ConfigError("GMM fitting needs at least 4 samples");
  }
  for (const double v : losses) {
    if (!std::isfinite(v)) {
      throw DataValidationError("GMM fitting received a non-finite loss");
    }
  }
  const auto [min_it, max_it] = std::minmax_element(losses.begin(), losses.end());
  if (*min_it == *max_it) {
    throw DegenerateInputError("all losses identical; no mixture structure to fit");
  }

  // Median-split initialization: low half -> component 0, high half -> 1.
  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = n / 2;
  GmmModel model;
  const auto moments = [](std::span<const double> v) {
    double mean = 0.0;
    for (const double x : v) {
      mean += x;
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) {
      var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(v.size());
    return std::pair<double, double>(mean, var);
  };
  const auto [mean_low, var_low] = moments(std::span<const double>(sorted.data(), half));
  const auto [mean_high, var_high] =
      moments(std::span<const double>(sorted.data() + half, n - half));
  model.means = {mean_low, mean_high};
  model.variances = {std::max(var_low, kVarianceFloor), std::max(var_high, kVarianceFloor)};
  model.weights = {0.5, 0.5};

  std::vector<double> responsibility(n);  // P(component 0 | x_i)
  double previous_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // E step.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double log_p0 =
          std::log(model.weights[0]) + log_normal_pdf(losses[i], model.means[0], model.variances[0]);
      const double log_p1 =
          std::log(model.weights[1]) + log_normal_pdf(losses[i], model.means[1], model.variances[1]);
      const double max_log = std::max(log_p0, log_p1);
      ll += max_log + std::log(std::exp(log_p0 - max_log) + std::exp(log_p1 - max_log));
      responsibility[i] = sigmoid(log_p0 - log_p1);
    }
    model.log_likelihood_trace.push_back(ll);
    if (ll - previous_ll < tol && iter > 0) {
      model.converged = true;
      break;
    }
    previous_ll = ll;

    // M step.
    double r0 = 0.0;
    double sum0 = 0.0;
    double sum1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r0 += responsibility[i];
      sum0 += responsibility[i] * losses[i];
      sum1 += (1.0 - responsibility[i]) * losses[i];
    }
    const double r1 = static_cast<double>(n) - r0;
    if (r0 <= 0.0 || r1 <= 0.0) {
      break;  // one component vanished; keep the last consistent state
    }
    model.means[0] = sum0 / r0;
    model.means[1] = sum1 / r1;
    double var0 = 0.0;
    double var1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d0 = losses[i] - model.means[0];
      const double d1 = losses[i] - model.means[1];
      var0 += responsibility[i] * d0 * d0;
      var1 += (1.0 - responsibility[i]) * d1 * d1;
    }
    model.variances[0] = std::max(var0 / r0, kVarianceFloor);
    model.variances[1] = std::max(var1 / r1, kVarianceFloor);
    model.weights[0] = r0 / static_cast<double>(n);
    model.weights[1] = r1 / static_cast<double>(n);
  }
  return model;
}

Mask select_gmm(std::span<const double> losses, const GmmModel& model, double threshold) {
  Mask mask(losses.size(), 0);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    mask[i] = model.posterior_clean(losses[i]) > threshold ? 1 : 0;
  }
  return mask;
}

}  // namespace deft
