#include "pbq/hessian.hpp"

#include <cmath>
#include <string>

#include "pbq/error.hpp"
#include "pbq/kernels.hpp"
#include "pbq/linalg.hpp"

namespace pbq {

HessianState::HessianState(std::size_t dim, double damping_fraction)
    : h_(dim, dim), damping_(0.0) {
  set_damping_fraction(damping_fraction);
}

void HessianState::set_damping_fraction(double f) {
  if (!(f >= 0.0) || !std::isfinite(f))
    throw InvalidArgument("damping fraction must be finite and >= 0");
  damping_ = f;
}

void HessianState::accumulate(const DenseMatrix &x) {
  if (x.rows() != dim())
    throw DimensionError("accumulate: activations have " + std::to_string(x.rows()) +
                         " rows, Hessian dimension is " + std::to_string(dim()));
  for (std::size_t a = 0; a < dim(); ++a)
    for (std::size_t b = a; b < dim(); ++b) {
      const double v = 2.0 * kernels::dot(x.row(a), x.row(b));
      h_(a, b) += v;
      if (b != a) h_(b, a) += v;
    }
  n_samples_ += x.cols();
}

HessianInverse HessianState::finalize(double damping_fraction) const {
  if (!(damping_fraction >= 0.0) || !std::isfinite(damping_fraction))
    throw InvalidArgument("damping fraction must be finite and >= 0");
  if (n_samples_ == 0) throw InvalidArgument("finalize: no calibration samples accumulated");
  const std::size_t n = dim();
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += h_(i, i);
  HessianInverse out;
  out.lambda = n == 0 ? 0.0 : damping_fraction * trace / static_cast<double>(n);
  DenseMatrix damped = h_;
  for (std::size_t i = 0; i < n; ++i) damped(i, i) += out.lambda;
  try {
    out.hinv = linalg::spd_inverse(damped);
    out.hinv_chol = linalg::cholesky_upper(out.hinv);
  } catch (const NumericalError &e) {
    throw NumericalError(std::string("Hessian finalize failed (raise the damping fraction): ") +
                         e.what());
  }
  return out;
}

HessianState HessianState::from_matrix(DenseMatrix h, std::size_t n_samples,
                                       double damping_fraction) {
  if (h.rows() != h.cols()) throw DimensionError("from_matrix: Hessian must be square");
  HessianState s(h.rows(), damping_fraction);
  s.h_ = std::move(h);
  s.n_samples_ = n_samples;
  return s;
}

} // namespace pbq
