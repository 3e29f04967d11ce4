#include "kernels_internal.hpp"

#include <immintrin.h>

#include <cmath>

namespace pbq::kernels {
namespace {

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double *a, const double *b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

// Bit-identical to the scalar variant: each lane is one independent fma.
void axpy_avx2(double a, const double *x, double *y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv));
  }
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

// Four consecutive bits starting at position j, possibly straddling words.
inline unsigned bits4(const std::uint64_t *words, std::size_t j) {
  const unsigned shift = j & 63;
  std::uint64_t v = words[j >> 6] >> shift;
  if (shift > 60) v |= words[(j >> 6) + 1] << (64 - shift);
  return static_cast<unsigned>(v & 0xF);
}

inline __m256d lane_mask(unsigned nibble) {
  const __m256i sel = _mm256_setr_epi64x(1, 2, 4, 8);
  const __m256i v = _mm256_and_si256(_mm256_set1_epi64x(nibble), sel);
  return _mm256_castsi256_pd(_mm256_cmpeq_epi64(v, sel));
}

MaskedSums masked_sums_avx2(const std::uint64_t *signs, const std::uint64_t *mask,
                            const double *x, std::size_t begin, std::size_t end) {
  __m256d unsal = _mm256_setzero_pd();
  __m256d neg = _mm256_setzero_pd();
  std::size_t j = begin;
  for (; j + 4 <= end; j += 4) {
    const unsigned keep = ~bits4(mask, j) & 0xF;
    if (keep == 0) continue;
    const unsigned negbits = keep & bits4(signs, j);
    const __m256d xv = _mm256_loadu_pd(x + j);
    unsal = _mm256_add_pd(unsal, _mm256_and_pd(xv, lane_mask(keep)));
    neg = _mm256_add_pd(neg, _mm256_and_pd(xv, lane_mask(negbits)));
  }
  MaskedSums out{hsum(unsal), hsum(neg)};
  for (; j < end; ++j) {
    const std::uint64_t bit = std::uint64_t{1} << (j & 63);
    if (mask[j >> 6] & bit) continue;
    out.unsalient += x[j];
    if (signs[j >> 6] & bit) out.negative += x[j];
  }
  return out;
}

} // namespace

const KernelSet &avx2_kernels_unchecked() {
  static const KernelSet set{"avx2", dot_avx2, axpy_avx2, masked_sums_avx2};
  return set;
}

} // namespace pbq::kernels
