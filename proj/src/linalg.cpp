#include "pbq/linalg.hpp"

#include <cmath>
#include <string>

#include "pbq/error.hpp"
#include "pbq/kernels.hpp"

namespace pbq::linalg {

DenseMatrix cholesky_lower(const DenseMatrix &a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix is not square");
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto lj = l.row(j).first(j);
    const double d = a(j, j) - kernels::dot(lj, lj);
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericalError("cholesky: non-positive pivot at column " + std::to_string(j));
    const double djj = std::sqrt(d);
    l(j, j) = djj;
    for (std::size_t i = j + 1; i < n; ++i)
      l(i, j) = (a(i, j) - kernels::dot(l.row(i).first(j), lj)) / djj;
  }
  return l;
}

DenseMatrix spd_inverse(const DenseMatrix &a) {
  const DenseMatrix l = cholesky_lower(a);
  const std::size_t n = l.rows();
  // Linv is lower triangular; forward substitution column by column.
  DenseMatrix linv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    linv(j, j) = 1.0 / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s += l(i, k) * linv(k, j);
      linv(i, j) = -s / l(i, i);
    }
  }
  // A^-1 = Linv^T Linv; rows of Linv^T are columns of Linv.
  const DenseMatrix lt = linv.transpose();
  DenseMatrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      // Linv^T(i, k) nonzero only for k >= i; Linv(k, j) only for k >= j.
      const std::size_t k0 = j;
      const double v = kernels::dot(lt.row(i).subspan(k0), lt.row(j).subspan(k0));
      inv(i, j) = v;
      inv(j, i) = v;
    }
  return inv;
}

DenseMatrix cholesky_upper(const DenseMatrix &a) { return cholesky_lower(a).transpose(); }

} // namespace pbq::linalg
