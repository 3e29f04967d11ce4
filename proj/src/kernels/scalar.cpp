#include "kernels_internal.hpp"

#include <cmath>

namespace pbq::kernels {
namespace {

double dot_scalar(const double *a, const double *b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

void axpy_scalar(double a, const double *x, double *y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

MaskedSums masked_sums_scalar(const std::uint64_t *signs, const std::uint64_t *mask,
                              const double *x, std::size_t begin, std::size_t end) {
  MaskedSums out;
  for (std::size_t j = begin; j < end; ++j) {
    const std::uint64_t bit = std::uint64_t{1} << (j & 63);
    if (mask[j >> 6] & bit) continue;
    out.unsalient += x[j];
    if (signs[j >> 6] & bit) out.negative += x[j];
  }
  return out;
}

} // namespace

const KernelSet &scalar_kernels() {
  static const KernelSet set{"scalar", dot_scalar, axpy_scalar, masked_sums_scalar};
  return set;
}

} // namespace pbq::kernels
