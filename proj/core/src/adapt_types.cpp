#include "deft/adapt_types.hpp"

#include <cmath>

#include "deft/error.hpp"
#include "deft/rng.hpp"

namespace deft {

const char* to_string(AdapterMode mode) {
  switch (mode) {
    case AdapterMode::identity:
      return "identity";
    case AdapterMode::low_rank:
      return "low_rank";
    case AdapterMode::full:
      return "full";
  }
  return "identity";
}

AdapterMode adapter_mode_from_string(const std::string& name) {
  if (name == "identity") {
    return AdapterMode::identity;
  }
  if (name == "low_rank") {
    return AdapterMode::low_rank;
  }
  if (name == "full") {
    return AdapterMode::full;
  }
  throw ConfigError("unknown adapter mode '" + name + "'");
}

AdapterParams AdapterParams::make_identity(std::size_t dim) {
  AdapterParams p;
  p.mode = AdapterMode::identity;
  p.dim = dim;
  p.rank = 0;
  return p;
}

AdapterParams AdapterParams::make_low_rank(std::size_t dim, std::size_t rank, double residual_scale,
                                           std::uint64_t seed) {
  if (rank == 0 || rank > dim) {
    throw ConfigError("adapter rank must lie in [1, dim]");
  }
  AdapterParams p;
  p.mode = AdapterMode::low_rank;
  p.dim = dim;
  p.rank = rank;
  p.residual_scale = residual_scale;
  p.down = Matrix(dim, rank);
  p.up = Matrix(rank, dim);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : p.down.data()) {
    v = scale * rng.normal();
  }
  return p;
}

AdapterParams AdapterParams::make_full(std::size_t dim) {
  AdapterParams p;
  p.mode = AdapterMode::full;
  p.dim = dim;
  p.rank = 0;
  p.dense = Matrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    p.dense.at(i, i) = 1.0;
  }
  return p;
}

AdapterParams AdapterParams::zeros_like() const {
  AdapterParams g = *this;
  g.down.fill(0.0);
  g.up.fill(0.0);
  g.dense.fill(0.0);
  return g;
}

std::size_t AdapterParams::parameter_count() const {
  switch (mode) {
    case AdapterMode::identity:
      return 0;
    case AdapterMode::low_rank:
      return down.data().size() + up.data().size();
    case AdapterMode::full:
      return dense.data().size();
  }
  return 0;
}

void AdapterParams::validate() const {
  switch (mode) {
    case AdapterMode::identity:
      return;
    case AdapterMode::low_rank:
      if (down.rows() != dim || down.cols() != rank || up.rows() != rank || up.cols() != dim) {
        throw DimensionError("low-rank adapter factor shapes do not match dim/rank");
      }
      return;
    case AdapterMode::full:
      if (dense.rows() != dim || dense.cols() != dim) {
        throw DimensionError("full adapter transform must be dim x dim");
      }
      return;
  }
}

void adapt_into(std::span<const double> x, const AdapterParams& params, std::span<double> out) {
  if (x.size() != params.dim && params.mode != AdapterMode::identity) {
    throw DimensionError("adapter expects dim " + std::to_string(params.dim) + ", got " +
                         std::to_string(x.size()));
  }
  if (out.size() != x.size()) {
    throw DimensionError("adapter output buffer size mismatch");
  }
  switch (params.mode) {
    case AdapterMode::identity: {
      for (std::size_t t = 0; t < x.size(); ++t) {
        out[t] = x[t];
      }
      return;
    }
    case AdapterMode::low_rank: {
      const std::size_t dim = params.dim;
      const std::size_t rank = params.rank;
      std::vector<double> hidden(rank, 0.0);
      for (std::size_t r = 0; r < rank; ++r) {
        double acc = 0.0;
        for (std::size_t t = 0; t < dim; ++t) {
          acc += x[t] * params.down.at(t, r);
        }
        hidden[r] = acc;
      }
      for (std::size_t t = 0; t < dim; ++t) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rank; ++r) {
          acc += hidden[r] * params.up.at(r, t);
        }
        out[t] = x[t] + params.residual_scale * acc;
      }
      return;
    }
    case AdapterMode::full: {
      const std::size_t dim = params.dim;
      for (std::size_t t = 0; t < dim; ++t) {
        double acc = 0.0;
        for (std::size_t s = 0; s < dim; ++s) {
          acc += x[s] * params.dense.at(s, t);
        }
        out[t] = acc;
      }
      return;
    }
  }
}

std::vector<float> apply_adapter(std::span<const float> input, const AdapterParams& params) {
  if (params.mode == AdapterMode::identity) {
    return {input.begin(), input.end()};
  }
  params.validate();
  std::vector<double> x(input.size());
  for (std::size_t t = 0; t < input.size(); ++t) {
    x[t] = static_cast<double>(input[t]);
  }
  std::vector<double> transformed(input.size());
  adapt_into(x, params, transformed);
  normalize_in_place(transformed);
  std::vector<float> out(input.size());
  for (std::size_t t = 0; t < input.size(); ++t) {
    out[t] = static_cast<float>(transformed[t]);
  }
  return out;
}

}  // namespace deft
