#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pbq/dense_matrix.hpp"

namespace pbq::fixtures {

inline DenseMatrix random_matrix(std::mt19937_64 &rng, std::size_t rows, std::size_t cols,
                                 double sigma = 1.0) {
  std::normal_distribution<double> nd(0.0, sigma);
  DenseMatrix m(rows, cols);
  for (double &v : m.data()) v = nd(rng);
  return m;
}

inline std::vector<double> random_vector(std::mt19937_64 &rng, std::size_t n,
                                         double sigma = 1.0) {
  std::normal_distribution<double> nd(0.0, sigma);
  std::vector<double> v(n);
  for (double &x : v) x = nd(rng);
  return v;
}

/// Gaussian weights with a few large outliers, like trained linear layers.
inline DenseMatrix outlier_weights(std::mt19937_64 &rng, std::size_t rows, std::size_t cols,
                                   double outlier_rate = 0.02, double outlier_gain = 5.0) {
  DenseMatrix w = random_matrix(rng, rows, cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double &v : w.data())
    if (u(rng) < outlier_rate) v *= outlier_gain;
  return w;
}

/// d x n samples with AR(1) feature correlation rho^|i-j| and per-feature
/// scales drawn from [0.5, 2].
inline DenseMatrix correlated_activations(std::mt19937_64 &rng, std::size_t d, std::size_t n,
                                          double rho = 0.9, double log_scale_sigma = 0.0) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  std::vector<double> s(d);
  for (double &v : s) v = log_scale_sigma > 0.0 ? std::exp(log_scale_sigma * nd(rng)) : scale(rng);
  DenseMatrix x(d, n);
  const double innov = std::sqrt(1.0 - rho * rho);
  for (std::size_t k = 0; k < n; ++k) {
    double prev = nd(rng);
    for (std::size_t i = 0; i < d; ++i) {
      if (i > 0) prev = rho * prev + innov * nd(rng);
      x(i, k) = s[i] * prev;
    }
  }
  return x;
}

/// Random symmetric positive definite matrix A A^T / n + I.
inline DenseMatrix random_spd(std::mt19937_64 &rng, std::size_t n) {
  DenseMatrix a = random_matrix(rng, n, n);
  DenseMatrix h = dense_matmul(a, a.transpose());
  for (double &v : h.data()) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) h(i, i) += 1.0;
  return h;
}

} // namespace pbq::fixtures
