#pragma once

#include <cstddef>

#include "pbq/dense_matrix.hpp"

namespace pbq {

/// Damped inverse of the accumulated Hessian and the upper Cholesky factor
/// of that inverse, which drives the column-by-column compensation.
struct HessianInverse {
  DenseMatrix hinv;       // (H + lambda I)^-1
  DenseMatrix hinv_chol;  // upper U with hinv = U^T U
  double lambda = 0.0;
};

/// Running H = 2 X X^T over calibration batches X (d_i x n).
class HessianState {
public:
  explicit HessianState(std::size_t dim, double damping_fraction = 0.01);

  /// Adds 2 X X^T; single-writer.
  void accumulate(const DenseMatrix &x);

  std::size_t dim() const noexcept { return h_.rows(); }
  std::size_t n_samples() const noexcept { return n_samples_; }
  double damping_fraction() const noexcept { return damping_; }
  void set_damping_fraction(double f);
  const DenseMatrix &matrix() const noexcept { return h_; }

  /// lambda = damping_fraction * mean(diag H). Throws InvalidArgument with no
  /// samples and NumericalError if H + lambda I is not positive definite.
  HessianInverse finalize() const { return finalize(damping_); }
  HessianInverse finalize(double damping_fraction) const;

  /// Builds a state around an explicit symmetric H (tests, synthetic use).
  static HessianState from_matrix(DenseMatrix h, std::size_t n_samples,
                                  double damping_fraction = 0.01);

private:
  DenseMatrix h_;
  std::size_t n_samples_ = 0;
  double damping_;
};

} // namespace pbq
