#include <gtest/gtest.h>

#include <random>

#include "pbq/binarizer.hpp"
#include "pbq/error.hpp"
#include "pbq/qat.hpp"
#include "test_util.hpp"

using namespace pbq;
using qat::PBLinearLayer;

namespace {

PBLinearLayer::Options options(bool through_scales, std::size_t g = 0, bool zero_point = true) {
  PBLinearLayer::Options o;
  o.group_size = g;
  o.use_zero_point = zero_point;
  o.grad_through_scales = through_scales;
  return o;
}

double clamp_clip(double v, double clip) { return std::max(-clip, std::min(clip, v)); }

// Differentiable stand-in for the effective weight around a base point w0.
// Constant mode freezes mu and alpha at w0; otherwise they follow w while the
// sign keeps its base value plus a clipped linear term.
DenseMatrix surrogate(const PBLinearLayer &base, const DenseMatrix &w) {
  const auto &opts = base.options();
  const ColumnGroups groups{w.cols(), opts.group_size};
  const std::size_t ng = groups.count();
  const auto s0 = base.scales();
  const DenseMatrix &w0 = base.latent();
  DenseMatrix out = w0; // salient entries are frozen constants
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t g = 0; g < ng; ++g) {
      double mu = s0.mu[r * ng + g], alpha = s0.alpha[r * ng + g];
      if (opts.grad_through_scales) {
        double sum = 0;
        std::size_t n = 0;
        for (std::size_t c = groups.begin(g); c < groups.end(g); ++c)
          if (!base.mask().test(r, c)) sum += w(r, c), ++n;
        if (n == 0) continue;
        mu = opts.use_zero_point ? sum / n : 0.0;
        double l1 = 0;
        for (std::size_t c = groups.begin(g); c < groups.end(g); ++c)
          if (!base.mask().test(r, c)) l1 += std::abs(w(r, c) - mu);
        alpha = l1 / n;
      }
      const double mu0 = s0.mu[r * ng + g];
      for (std::size_t c = groups.begin(g); c < groups.end(g); ++c) {
        if (base.mask().test(r, c)) continue;
        const double sign0 = sign_of(w0(r, c) - mu0);
        if (opts.grad_through_scales)
          out(r, c) = mu + alpha * (sign0 + clamp_clip(w(r, c) - mu, opts.clip) -
                                    clamp_clip(w0(r, c) - mu0, opts.clip));
        else
          out(r, c) = mu + alpha * clamp_clip(w(r, c) - mu, opts.clip);
      }
    }
  return out;
}

double max_fd_error(const PBLinearLayer &layer, std::mt19937_64 &rng) {
  const DenseMatrix g = fixtures::random_matrix(rng, layer.out_features(), layer.in_features());
  const DenseMatrix analytic = layer.latent_gradient(g, layer.scales());
  auto loss = [&](const DenseMatrix &w) {
    const DenseMatrix s = surrogate(layer, w);
    double acc = 0;
    for (std::size_t i = 0; i < s.size(); ++i) acc += g.data()[i] * s.data()[i];
    return acc;
  };
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    DenseMatrix wp = layer.latent(), wm = layer.latent();
    wp.data()[i] += h;
    wm.data()[i] -= h;
    const double fd = (loss(wp) - loss(wm)) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic.data()[i]));
  }
  return worst;
}

} // namespace

TEST(PBLinear, AllSalientIsDense) {
  std::mt19937_64 rng(1);
  const DenseMatrix w = fixtures::random_matrix(rng, 5, 7);
  const PBLinearLayer l(w, std::vector<double>(5, 0.5), 1.0, options(false));
  EXPECT_EQ(l.effective_weight(), w);
  const auto x = fixtures::random_vector(rng, 7);
  const auto y = l.forward(x);
  const auto ref = dense_matvec(w, x);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(y[i], ref[i] + 0.5);
}

TEST(PBLinear, SymmetricRowBinarizesLosslessly) {
  const PBLinearLayer l(DenseMatrix(1, 2, {2, -2}), {0.0}, 0.0, options(false));
  EXPECT_EQ(l.effective_weight(), DenseMatrix(1, 2, {2, -2}));
  const std::vector<double> x{1.0, 1.0};
  EXPECT_EQ(l.forward(x)[0], 0.0);
}

TEST(PBLinear, EffectiveWeightMatchesAssembledMatrix) {
  std::mt19937_64 rng(2);
  for (std::size_t g : {0, 3}) {
    const DenseMatrix w = fixtures::outlier_weights(rng, 6, 12);
    const PBLinearLayer l(w, std::vector<double>(6), 0.2, options(false, g));
    QuantConfig c;
    c.group_size = g;
    const PBMatrix pb = assemble(w, l.mask(), c);
    const DenseMatrix d = dequantize(pb);
    const DenseMatrix e = l.effective_weight();
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t col = 0; col < 12; ++col)
        if (!l.mask().test(r, col)) EXPECT_NEAR(e(r, col), d(r, col), 1e-12);
        else EXPECT_EQ(e(r, col), w(r, col));
  }
}

TEST(PBLinear, SalientAndClippedEntriesGetNoGradient) {
  const DenseMatrix w(1, 5, {3, -3, 0.5, -0.5, 9});
  SaliencyMask m(1, 5);
  m.set(0, 4);
  const PBLinearLayer l(w, {0.0}, m, options(false));
  const DenseMatrix g = l.latent_gradient(DenseMatrix(1, 5, {1, 1, 1, 1, 1}), l.scales());
  // mu 0, alpha 1.75: +-3 lie outside the unit clip
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_EQ(g(0, 1), 0.0);
  EXPECT_EQ(g(0, 2), 1.75);
  EXPECT_EQ(g(0, 3), 1.75);
  EXPECT_EQ(g(0, 4), 0.0);
  const PBLinearLayer l2(w, {0.0}, m, options(true));
  EXPECT_EQ(l2.latent_gradient(DenseMatrix(1, 5, {1, 1, 1, 1, 1}), l2.scales())(0, 4), 0.0);
}

TEST(PBLinear, BackwardShapesAndBias) {
  std::mt19937_64 rng(3);
  const PBLinearLayer l(fixtures::random_matrix(rng, 4, 6), std::vector<double>(4), 0.25,
                        options(false));
  const DenseMatrix batch = fixtures::random_matrix(rng, 10, 6);
  const DenseMatrix up = fixtures::random_matrix(rng, 10, 4);
  const auto g = l.backward(batch, up);
  EXPECT_EQ(g.input.rows(), 10u);
  EXPECT_EQ(g.input.cols(), 6u);
  double s = 0;
  for (std::size_t n = 0; n < 10; ++n) s += up(n, 2);
  EXPECT_DOUBLE_EQ(g.bias[2], s);
  EXPECT_THROW(l.backward(batch, DenseMatrix(9, 4)), DimensionError);
}

TEST(PBLinear, FiniteDifferenceConstantScales) {
  std::mt19937_64 rng(4);
  for (std::size_t g : {0, 4}) {
    const PBLinearLayer l(fixtures::random_matrix(rng, 6, 12, 0.4), std::vector<double>(6), 0.2,
                          options(false, g));
    EXPECT_LT(max_fd_error(l, rng), 1e-4);
  }
}

TEST(PBLinear, FiniteDifferenceThroughScales) {
  std::mt19937_64 rng(5);
  for (bool zp : {true, false})
    for (std::size_t g : {0, 5}) {
      const PBLinearLayer l(fixtures::random_matrix(rng, 6, 15, 0.4), std::vector<double>(6), 0.2,
                            options(true, g, zp));
      EXPECT_LT(max_fd_error(l, rng), 1e-4) << "zero_point=" << zp << " g=" << g;
    }
}

TEST(Train, DeterministicForSeed) {
  qat::TrainConfig c;
  c.steps = 30;
  c.seed = 11;
  const auto a = qat::train_demo(c), b = qat::train_demo(c);
  ASSERT_EQ(a.size(), 31u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_EQ(a[i].alpha_snapshot, b[i].alpha_snapshot);
  }
  c.seed = 12;
  EXPECT_NE(qat::train_demo(c)[0].loss, a[0].loss);
}

TEST(Train, SalientLatentsStayFrozen) {
  qat::TrainConfig c;
  c.steps = 40;
  const auto res = qat::train_network(c);
  for (std::size_t li = 0; li < 2; ++li) {
    const auto &before = res.initial[li], &after = res.final[li];
    std::size_t moved = 0;
    for (std::size_t r = 0; r < before.out_features(); ++r)
      for (std::size_t col = 0; col < before.in_features(); ++col) {
        if (before.mask().test(r, col))
          EXPECT_EQ(before.latent()(r, col), after.latent()(r, col));
        else
          moved += before.latent()(r, col) != after.latent()(r, col);
      }
    EXPECT_GT(moved, 0u);
  }
  EXPECT_LT(res.records.back().loss, res.records.front().loss);
}

// Every weight frozen: only biases move, so an independent Adam over the
// biases of a dense network must trace the same losses.
TEST(Train, FullySalientMatchesDenseBiasTraining) {
  qat::TrainConfig c;
  c.salient_fraction = 1.0;
  c.steps = 25;
  c.seed = 3;
  const auto rec = qat::train_demo(c);
  const auto p = qat::make_demo_problem(c.seed, c.samples);

  std::vector<double> b1 = p.b1, b2 = p.b2;
  std::vector<double> m1(b1.size()), v1(b1.size()), m2(b2.size()), v2(b2.size());
  const std::size_t n = p.inputs.rows();
  for (std::size_t step = 0; step <= c.steps; ++step) {
    DenseMatrix h(n, 32), y(n, 16);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < 32; ++i) {
        double z = b1[i];
        for (std::size_t k = 0; k < 16; ++k) z += p.w1(i, k) * p.inputs(s, k);
        h(s, i) = std::tanh(z);
      }
      for (std::size_t o = 0; o < 16; ++o) {
        double z = b2[o];
        for (std::size_t i = 0; i < 32; ++i) z += p.w2(o, i) * h(s, i);
        y(s, o) = z;
      }
    }
    double loss = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
      loss += std::pow(y.data()[i] - p.targets.data()[i], 2);
    loss /= static_cast<double>(y.size());
    EXPECT_NEAR(rec[step].loss, loss, 1e-9 * loss) << "step " << step;
    if (step == c.steps) break;

    std::vector<double> g1(32, 0.0), g2(16, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<double> dy(16);
      for (std::size_t o = 0; o < 16; ++o) {
        dy[o] = 2.0 * (y(s, o) - p.targets(s, o)) / static_cast<double>(y.size());
        g2[o] += dy[o];
      }
      for (std::size_t i = 0; i < 32; ++i) {
        double d = 0;
        for (std::size_t o = 0; o < 16; ++o) d += dy[o] * p.w2(o, i);
        g1[i] += d * (1 - h(s, i) * h(s, i));
      }
    }
    const double t = static_cast<double>(step + 1);
    auto adam = [&](std::vector<double> &x, std::vector<double> &m, std::vector<double> &v,
                    const std::vector<double> &g) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
        x[i] -= c.learning_rate * mh / (std::sqrt(vh) + 1e-8);
      }
    };
    adam(b1, m1, v1, g1);
    adam(b2, m2, v2, g2);
  }
}

TEST(Train, RejectsBadConfig) {
  qat::TrainConfig c;
  c.salient_fraction = 1.5;
  EXPECT_THROW(qat::train_demo(c), InvalidArgument);
  c.salient_fraction = 0.3;
  c.learning_rate = 0;
  EXPECT_THROW(qat::train_demo(c), InvalidArgument);
}

TEST(Probe, ErrorNonIncreasingInFraction) {
  std::mt19937_64 rng(6);
  std::vector<qat::ProbeLayer> layers;
  for (int i = 0; i < 3; ++i)
    layers.push_back({"l" + std::to_string(i), fixtures::outlier_weights(rng, 24, 32),
                      fixtures::correlated_activations(rng, 32, 64)});
  const double fr[] = {0.0, 0.05, 0.1, 0.3, 0.5, 1.0};
  const auto reports = qat::zero_shot_capacity_probe(layers, fr);
  ASSERT_EQ(reports.size(), 18u);
  EXPECT_EQ(reports[1].name, "l0@0.05");
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t i = 1; i < 6; ++i)
      EXPECT_LE(reports[l * 6 + i].relative_error, reports[l * 6 + i - 1].relative_error + 1e-12);
    EXPECT_LT(reports[l * 6 + 5].relative_error, 1e-2);
  }
  EXPECT_EQ(qat::zero_shot_capacity_probe(layers).size(), 12u);
}
