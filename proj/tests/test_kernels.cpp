#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pbq/kernels.hpp"

using pbq::kernels::KernelSet;

namespace {

const KernelSet *simd() { return pbq::kernels::avx2_kernels(); }

std::vector<double> random_doubles(std::mt19937_64 &rng, std::size_t n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (double &x : v) x = nd(rng);
  return v;
}

std::vector<std::uint64_t> random_words(std::mt19937_64 &rng, std::size_t n) {
  std::vector<std::uint64_t> v(n);
  for (auto &w : v) w = rng();
  return v;
}

} // namespace

TEST(Kernels, ActiveSetIsOneOfTheVariants) {
  const auto &a = pbq::kernels::active();
  EXPECT_TRUE(a.name == "scalar" || a.name == "avx2");
}

TEST(Kernels, ScalarDotAndAxpyByHand) {
  const auto &k = pbq::kernels::scalar_kernels();
  const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
  EXPECT_EQ(k.dot(a, b, 3), 32.0);
  double y[] = {1, 1, 1};
  k.axpy(2.0, a, y, 3);
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(y[2], 7.0);
}

TEST(Kernels, ScalarMaskedSumsByHand) {
  // positions 0..4: mask marks 1; signs mark 2 and 3 negative.
  const std::uint64_t mask = 0b00010, signs = 0b01100;
  const double x[] = {1, 10, 100, 1000, 10000};
  const auto s = pbq::kernels::scalar_kernels().masked_sums(&signs, &mask, x, 0, 5);
  EXPECT_EQ(s.unsalient, 11101.0);
  EXPECT_EQ(s.negative, 1100.0);
  const auto t = pbq::kernels::scalar_kernels().masked_sums(&signs, &mask, x, 2, 4);
  EXPECT_EQ(t.unsalient, 1100.0);
}

TEST(Kernels, SimdDotMatchesScalar) {
  const KernelSet *simd = ::simd();
  if (simd == nullptr) GTEST_SKIP() << "no SIMD kernels on this CPU";
  std::mt19937_64 rng(1);
  for (std::size_t n : {0, 1, 3, 4, 7, 8, 9, 31, 64, 257}) {
    auto a = random_doubles(rng, n), b = random_doubles(rng, n);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
    const double ref = pbq::kernels::scalar_kernels().dot(a.data(), b.data(), n);
    EXPECT_NEAR(simd->dot(a.data(), b.data(), n), ref, 1e-14 * (mag + 1)) << "n=" << n;
  }
}

TEST(Kernels, SimdAxpyIsBitIdentical) {
  const KernelSet *simd = ::simd();
  if (simd == nullptr) GTEST_SKIP() << "no SIMD kernels on this CPU";
  std::mt19937_64 rng(2);
  for (std::size_t n : {0, 1, 5, 8, 13, 100}) {
    auto x = random_doubles(rng, n), y = random_doubles(rng, n);
    auto y2 = y;
    pbq::kernels::scalar_kernels().axpy(0.37, x.data(), y.data(), n);
    simd->axpy(0.37, x.data(), y2.data(), n);
    EXPECT_EQ(y, y2);
  }
}

TEST(Kernels, SimdMaskedSumsMatchScalarOnArbitraryRanges) {
  const KernelSet *simd = ::simd();
  if (simd == nullptr) GTEST_SKIP() << "no SIMD kernels on this CPU";
  std::mt19937_64 rng(3);
  const std::size_t bits = 300;
  auto x = random_doubles(rng, bits);
  auto signs = random_words(rng, (bits + 63) / 64);
  auto mask = random_words(rng, (bits + 63) / 64);
  std::uniform_int_distribution<std::size_t> pos(0, bits);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t b = pos(rng), e = pos(rng);
    if (b > e) std::swap(b, e);
    const auto ref =
        pbq::kernels::scalar_kernels().masked_sums(signs.data(), mask.data(), x.data(), b, e);
    const auto got = simd->masked_sums(signs.data(), mask.data(), x.data(), b, e);
    double mag = 0;
    for (std::size_t j = b; j < e; ++j) mag += std::abs(x[j]);
    EXPECT_NEAR(got.unsalient, ref.unsalient, 1e-13 * (mag + 1));
    EXPECT_NEAR(got.negative, ref.negative, 1e-13 * (mag + 1));
  }
}
