#include "deft/math.hpp"

#include <algorithm>

namespace deft {

void softmax_over_sims(std::span<const double> sims, Temperature tau, std::span<double> out) {
  if (sims.empty()) {
    throw EmptyInputError("softmax_over_sims: empty input");
  }
  if (out.size() != sims.size()) {
    throw DimensionError("softmax_over_sims: output size mismatch");
  }
  // Subtract the max before scaling by 1/tau: keeps exp() in range and makes
  // the result invariant under a constant shift of every input.
  const double inv_tau = 1.0 / tau.value();
  const double max_sim = *std::max_element(sims.begin(), sims.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    out[i] = std::exp((sims[i] - max_sim) * inv_tau);
    sum += out[i];
  }
  for (std::size_t i = 0; i < sims.size(); ++i) {
    out[i] /= sum;
  }
}

std::vector<double> softmax_over_sims(std::span<const double> sims, Temperature tau) {
  std::vector<double> out(sims.size());
  softmax_over_sims(sims, tau, out);
  return out;
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) {
    throw EmptyInputError("logsumexp: empty input");
  }
  const double max_value = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (const double v : values) {
    sum += std::exp(v - max_value);
  }
  return max_value + std::log(sum);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) {
    throw EmptyInputError("argmax: empty input");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) {
      best = i;
    }
  }
  return best;
}

void normalize_in_place(std::span<double> v) {
  const double norm = detail::norm_f64(std::span<const double>(v.data(), v.size()));
  if (norm == 0.0) {
    throw DegenerateInputError("normalize: zero-norm vector");
  }
  for (double& x : v) {
    x /= norm;
  }
}

void normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    normalize_in_place(m.row(r));
  }
}

}  // namespace deft
