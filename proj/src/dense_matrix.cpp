#include "pbq/dense_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pbq/error.hpp"
#include "pbq/kernels.hpp"

namespace pbq {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("DenseMatrix: data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw InvalidArgument("DenseMatrix: non-finite value at flat index " +
                            std::to_string(i));
    }
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

DenseMatrix dense_matmul(const DenseMatrix &w, const DenseMatrix &x) {
  if (w.cols() != x.rows()) {
    throw DimensionError("dense_matmul: inner dimensions " + std::to_string(w.cols()) +
                         " and " + std::to_string(x.rows()) + " differ");
  }
  DenseMatrix out(w.rows(), x.cols());
  // Row-of-W times rows-of-X accumulation keeps every inner loop contiguous.
  for (std::size_t i = 0; i < w.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < w.cols(); ++k) {
      const double a = w(i, k);
      if (a != 0.0) kernels::axpy(a, x.row(k), dst);
    }
  }
  return out;
}

std::vector<double> dense_matvec(const DenseMatrix &w, std::span<const double> x) {
  if (w.cols() != x.size()) {
    throw DimensionError("dense_matvec: matrix has " + std::to_string(w.cols()) +
                         " columns, vector has " + std::to_string(x.size()));
  }
  std::vector<double> y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) y[i] = kernels::dot(w.row(i), x);
  return y;
}

DenseMatrix linear_combination(double a, const DenseMatrix &lhs, double b,
                               const DenseMatrix &rhs) {
  if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols())
    throw DimensionError("linear_combination: shape mismatch");
  DenseMatrix out(lhs.rows(), lhs.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = a * lhs.data()[i] + b * rhs.data()[i];
  return out;
}

double frobenius_norm(const DenseMatrix &m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const DenseMatrix &a, const DenseMatrix &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

} // namespace pbq
