#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pbq/binarizer.hpp"
#include "pbq/error.hpp"
#include "test_util.hpp"

using namespace pbq;

TEST(SignBinarize, ZerosMapToPlusOne) {
  const double w[] = {0.0, -0.0, 2.0, -3.0};
  const BinVector b = sign_binarize(w);
  EXPECT_EQ(b[0], 1);
  EXPECT_EQ(b[1], 1);
  EXPECT_EQ(b[2], 1);
  EXPECT_EQ(b[3], -1);
}

TEST(SignBinarize, AllPositive) {
  const double w[] = {0.1, 5, 1e-300};
  const BinVector b = sign_binarize(w);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b[i], 1);
}

TEST(SignBinarize, NaNRejected) {
  const double w[] = {1.0, std::nan("")};
  EXPECT_THROW(sign_binarize(w), InvalidArgument);
}

TEST(SignBinarize, OddSymmetryAndNoZeros) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto w = fixtures::random_vector(rng, 70);
    std::vector<double> neg(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) neg[i] = -w[i];
    const BinVector a = sign_binarize(w), b = sign_binarize(neg);
    for (std::size_t i = 0; i < w.size(); ++i) {
      EXPECT_EQ(a[i], -b[i]);
      EXPECT_NE(a[i], 0);
    }
  }
}

TEST(OptimalAlpha, HandExamples) {
  const double a[] = {1, -1, 1, 1}, b[] = {3, -1};
  EXPECT_EQ(optimal_alpha(a), 1.0);
  EXPECT_EQ(optimal_alpha(b), 2.0);
  EXPECT_THROW(optimal_alpha(std::span<const double>{}), InvalidArgument);
}

TEST(OptimalAlpha, GridSearchOracleNeverBeatsClosedForm) {
  std::mt19937_64 rng(4);
  auto w = fixtures::random_vector(rng, 32);
  const double a_star = optimal_alpha(w);
  const double j_star = binarization_error(w, a_star);
  double maxabs = 0;
  for (double v : w) maxabs = std::max(maxabs, std::abs(v));
  for (double a = 0.0; a <= 2.0 * maxabs; a += 1e-3)
    ASSERT_GE(binarization_error(w, a), j_star - 1e-9) << "alpha=" << a;
}

TEST(OptimalAlpha, PositiveHomogeneity) {
  std::mt19937_64 rng(5);
  for (double c : {2.0, -0.5, 4.0, -8.0}) {
    auto w = fixtures::random_vector(rng, 17);
    std::vector<double> cw(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) cw[i] = c * w[i];
    EXPECT_NEAR(optimal_alpha(cw), std::abs(c) * optimal_alpha(w), 1e-15 * std::abs(c) * 10);
  }
}

TEST(BinarizationError, HandExamples) {
  const double a[] = {1, -1}, b[] = {3, -1};
  EXPECT_EQ(binarization_error(a, 1.0), 0.0);
  EXPECT_EQ(binarization_error(b, 2.0), 2.0);
  EXPECT_EQ(binarization_error(b, 0.0), 10.0);
}

TEST(BinarizationError, DirectEqualsExpandedForm) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> alpha(0.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    auto w = fixtures::random_vector(rng, 1 + t % 40);
    const double a = alpha(rng);
    const double d = binarization_error(w, a), e = binarization_error_expanded(w, a);
    double scale = 0;
    for (double v : w) scale += v * v + a * a + 2 * a * std::abs(v);
    EXPECT_LE(std::abs(d - e), 1e-12 * scale);
  }
}

TEST(SteBackward, ClipBranches) {
  EXPECT_EQ(ste_backward(0.5, 3.0), 3.0);
  EXPECT_EQ(ste_backward(1.5, 3.0), 0.0);
  EXPECT_EQ(ste_backward(-1.0, 3.0), 3.0);
  EXPECT_EQ(ste_backward(-1.0000001, 3.0), 0.0);
  EXPECT_EQ(ste_backward(0.3, 2.0, 0.25), 0.0);
}
