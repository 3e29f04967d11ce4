#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pbq {

/// Row-major real matrix. Rows are output channels, columns input features.
/// All entries are finite; construction rejects NaN and Inf.
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  DenseMatrix transpose() const;

  bool operator==(const DenseMatrix &) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Standard product W·X. Throws DimensionError when W.cols != X.rows.
DenseMatrix dense_matmul(const DenseMatrix &w, const DenseMatrix &x);

/// W·x for a single vector.
std::vector<double> dense_matvec(const DenseMatrix &w, std::span<const double> x);

/// a·A + b·B, elementwise.
DenseMatrix linear_combination(double a, const DenseMatrix &lhs, double b,
                               const DenseMatrix &rhs);

double frobenius_norm(const DenseMatrix &m);

/// Largest absolute elementwise difference. Shapes must match.
double max_abs_diff(const DenseMatrix &a, const DenseMatrix &b);

} // namespace pbq
