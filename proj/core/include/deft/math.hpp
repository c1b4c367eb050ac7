#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "deft/error.hpp"

namespace deft {

/// Softmax temperature. Strictly positive by construction.
class Temperature {
 public:
  explicit Temperature(double tau) : value_(tau) {
    if (!std::isfinite(tau) || tau <= 0.0) {
      throw ConfigError("softmax temperature must be finite and positive");
    }
  }
  double value() const { return value_; }

 private:
  double value_;
};

/// Default temperature for all similarity softmaxes, configurable wherever a
/// Temperature is accepted. Synthetic embedding-space cosines spread several
/// times wider than encoder-backed ones, so the default sits high enough to
/// keep similarity logits out of the saturated regime.
inline constexpr double kDefaultTau = 0.1;

/// Dense row-major matrix of doubles. Parameters, gradients and probability
/// tables all use this; stored dataset embeddings stay in 32-bit floats.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double value) { data_.assign(data_.size(), value); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

template <typename A, typename B>
double dot_f64(std::span<const A> a, std::span<const B> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <typename T>
double norm_f64(std::span<const T> v) {
  return std::sqrt(dot_f64(v, v));
}

}  // namespace detail

/// Cosine similarity dot(a,b) / (|a||b|), accumulated in 64-bit. Exactly
/// symmetric in its arguments.
template <typename A, typename B>
double cosine_sim(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_sim: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
  if (a.empty()) {
    throw EmptyInputError("cosine_sim: empty vectors");
  }
  const double na = detail::norm_f64(a);
  const double nb = detail::norm_f64(b);
  if (na == 0.0 || nb == 0.0) {
    throw DegenerateInputError("cosine_sim: zero-norm input");
  }
  return detail::dot_f64(a, b) / (na * nb);
}

inline double cosine_sim(const std::vector<float>& a, const std::vector<float>& b) {
  return cosine_sim(std::span<const float>(a), std::span<const float>(b));
}

inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine_sim(std::span<const double>(a), std::span<const double>(b));
}

/// Softmax of sims / tau with max-subtraction, so arbitrarily large inputs
/// stay finite and shifting every entry by a constant leaves the output
/// bit-identical. Output sums to 1 and preserves the input argmax.
std::vector<double> softmax_over_sims(std::span<const double> sims, Temperature tau);

/// In-place variant used by inner loops; `out` must have sims.size().
void softmax_over_sims(std::span<const double> sims, Temperature tau, std::span<double> out);

/// Numerically stable logistic function.
inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(sum exp(v)) with max-subtraction.
double logsumexp(std::span<const double> values);

/// Index of the largest value; ties resolve to the smallest index.
std::size_t argmax(std::span<const double> values);

/// Scales v to unit Euclidean norm. Zero input throws DegenerateInputError.
void normalize_in_place(std::span<double> v);

/// Renormalizes every row of m to unit norm.
void normalize_rows(Matrix& m);

}  // namespace deft
