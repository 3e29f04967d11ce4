#pragma once

#include "pbq/dense_matrix.hpp"

namespace pbq::linalg {

/// Lower-triangular L with A = L L^T. Throws NumericalError when a pivot is
/// not strictly positive.
DenseMatrix cholesky_lower(const DenseMatrix &a);

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
DenseMatrix spd_inverse(const DenseMatrix &a);

/// Upper-triangular U with A = U^T U.
DenseMatrix cholesky_upper(const DenseMatrix &a);

} // namespace pbq::linalg
