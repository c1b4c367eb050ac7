#include "deft/synthetic.hpp"

#include <cmath>
#include <string>

#include "deft/error.hpp"
#include "deft/rng.hpp"

namespace deft {

namespace {

constexpr int kMaxPlacementAttempts = 1000;

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) {
    x = rng.normal();
  }
  normalize_in_place(v);
  return v;
}

// Rejection-samples prototypes until every pairwise angle is at least
// `separation`. Infeasible packings surface as ConfigError.
Matrix place_prototypes(Rng& rng, std::size_t num_classes, std::size_t dim, double separation) {
  const double max_cos = std::cos(separation);
  Matrix prototypes(num_classes, dim);
  for (std::size_t k = 0; k < num_classes; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      const std::vector<double> candidate = random_unit_vector(rng, dim);
      placed = true;
      for (std::size_t j = 0; j < k; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < dim; ++t) {
          dot += candidate[t] * prototypes.at(j, t);
        }
        if (dot > max_cos) {
          placed = false;
          break;
        }
      }
      if (placed) {
        for (std::size_t t = 0; t < dim; ++t) {
          prototypes.at(k, t) = candidate[t];
        }
      }
    }
    if (!placed) {
      throw ConfigError("cannot place " + std::to_string(num_classes) + " prototypes in " +
                        std::to_string(dim) + " dimensions at angular separation " +
                        std::to_string(separation));
    }
  }
  return prototypes;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (dim < 2) {
    throw ConfigError("synthetic dim must be at least 2");
  }
  if (num_classes == 0 || n < num_classes) {
    throw ConfigError("synthetic requires n >= num_classes >= 1");
  }
  if (class_separation < 0.0 || intra_class_noise < 0.0 || text_anchor_jitter < 0.0) {
    throw ConfigError("synthetic spread parameters must be non-negative");
  }
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const Matrix prototypes = place_prototypes(rng, config.num_classes, config.dim, config.class_separation);

  SyntheticData out;
  LabeledDataset& ds = out.dataset;
  ds.n = config.n;
  ds.dim = config.dim;
  ds.num_classes = config.num_classes;
  ds.class_names = default_class_names(config.num_classes);
  ds.normalized = true;
  ds.features.resize(config.n * config.dim);
  ds.given_labels.resize(config.n);

  std::vector<double> sample(config.dim);
  for (std::size_t i = 0; i < config.n; ++i) {
    const std::size_t label = i % config.num_classes;  // balanced classes
    ds.given_labels[i] = static_cast<std::uint32_t>(label);
    const auto prototype = prototypes.row(label);
    if (config.intra_class_noise == 0.0) {
      for (std::size_t t = 0; t < config.dim; ++t) {
        sample[t] = prototype[t];
      }
    } else {
      for (std::size_t t = 0; t < config.dim; ++t) {
        sample[t] = prototype[t] + config.intra_class_noise * rng.normal();
      }
      normalize_in_place(sample);
    }
    for (std::size_t t = 0; t < config.dim; ++t) {
      ds.features[i * config.dim + t] = static_cast<float>(sample[t]);
    }
  }
  ds.true_labels = ds.given_labels;

  out.text_anchors = Matrix(config.num_classes, config.dim);
  for (std::size_t k = 0; k < config.num_classes; ++k) {
    auto anchor = out.text_anchors.row(k);
    const auto prototype = prototypes.row(k);
    if (config.text_anchor_jitter == 0.0) {
      for (std::size_t t = 0; t < config.dim; ++t) {
        anchor[t] = prototype[t];
      }
    } else {
      for (std::size_t t = 0; t < config.dim; ++t) {
        anchor[t] = prototype[t] + config.text_anchor_jitter * rng.normal();
      }
      normalize_in_place(anchor);
    }
  }

  ds.validate();
  return out;
}

}  // namespace deft
