#pragma once

// Inner-loop kernels with a portable scalar reference and SIMD variants.
// The variant is picked once at startup from CPU features; PBQ_KERNELS=scalar
// forces the reference path.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace pbq::kernels {

/// Sums of x over the unsalient positions of a bit range, split by sign bit.
struct MaskedSums {
  double unsalient = 0.0; // sum of x_j where mask bit is 0
  double negative = 0.0;  // sum of x_j where mask bit is 0 and sign bit is 1
};

struct KernelSet {
  std::string_view name;
  double (*dot)(const double *a, const double *b, std::size_t n);
  /// y += a * x, one fused multiply-add per element.
  void (*axpy)(double a, const double *x, double *y, std::size_t n);
  /// Bits are addressed from bit 0 of word 0; x is indexed by the same
  /// positions. Only positions in [begin, end) contribute.
  MaskedSums (*masked_sums)(const std::uint64_t *signs, const std::uint64_t *mask,
                            const double *x, std::size_t begin, std::size_t end);
};

const KernelSet &scalar_kernels();

/// AVX2+FMA variant, or nullptr when the CPU (or build) lacks support.
const KernelSet *avx2_kernels();

/// The dispatch choice used by the rest of the library.
const KernelSet &active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

} // namespace pbq::kernels
