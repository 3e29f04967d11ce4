#include "pbq/qat.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "pbq/binarizer.hpp"
#include "pbq/error.hpp"
#include "pbq/pbmatrix.hpp"

namespace pbq::qat {

PBLinearLayer::PBLinearLayer(DenseMatrix latent, std::vector<double> bias,
                             double salient_fraction, Options options)
    : PBLinearLayer(latent, std::move(bias),
                    detect_magnitude(latent, salient_fraction, Granularity::element,
                                     options.group_size),
                    options) {}

PBLinearLayer::PBLinearLayer(DenseMatrix latent, std::vector<double> bias, SaliencyMask mask,
                             Options options)
    : latent_(std::move(latent)), bias_(std::move(bias)), mask_(std::move(mask)),
      opts_(options) {
  if (bias_.size() != latent_.rows())
    throw DimensionError("PBLinearLayer: bias length must equal output features");
  if (mask_.rows() != latent_.rows() || mask_.cols() != latent_.cols())
    throw DimensionError("PBLinearLayer: mask shape mismatch");
  if (!(opts_.clip > 0.0)) throw InvalidArgument("PBLinearLayer: clip must be positive");
}

PBLinearLayer::Scales PBLinearLayer::scales() const {
  const ColumnGroups groups{latent_.cols(), opts_.group_size};
  const std::size_t ng = groups.count();
  Scales s{std::vector<double>(latent_.rows() * ng, 0.0),
           std::vector<double>(latent_.rows() * ng, 0.0)};
  for (std::size_t r = 0; r < latent_.rows(); ++r)
    for (std::size_t g = 0; g < ng; ++g) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t c = groups.begin(g); c < groups.end(g); ++c)
        if (!mask_.test(r, c)) {
          sum += latent_(r, c);
          ++n;
        }
      if (n == 0) continue;
      const double mu = opts_.use_zero_point ? sum / static_cast<double>(n) : 0.0;
      double l1 = 0.0;
      for (std::size_t c = groups.begin(g); c < groups.end(g); ++c)
        if (!mask_.test(r, c)) l1 += std::abs(latent_(r, c) - mu);
      s.mu[r * ng + g] = mu;
      s.alpha[r * ng + g] = l1 / static_cast<double>(n);
    }
  return s;
}

DenseMatrix PBLinearLayer::effective_weight() const {
  const Scales s = scales();
  const ColumnGroups groups{latent_.cols(), opts_.group_size};
  const std::size_t ng = groups.count();
  DenseMatrix w = latent_;
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) {
      if (mask_.test(r, c)) continue;
      const std::size_t at = r * ng + groups.of(c);
      w(r, c) = binarize_entry(latent_(r, c), s.mu[at], s.alpha[at]);
    }
  return w;
}

std::vector<double> PBLinearLayer::forward(std::span<const double> x) const {
  auto y = dense_matvec(effective_weight(), x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias_[i];
  return y;
}

DenseMatrix PBLinearLayer::forward(const DenseMatrix &batch) const {
  DenseMatrix y = dense_matmul(batch, effective_weight().transpose());
  for (std::size_t n = 0; n < y.rows(); ++n)
    for (std::size_t i = 0; i < y.cols(); ++i) y(n, i) += bias_[i];
  return y;
}

DenseMatrix PBLinearLayer::latent_gradient(const DenseMatrix &grad_effective,
                                           const Scales &s) const {
  const ColumnGroups groups{latent_.cols(), opts_.group_size};
  const std::size_t ng = groups.count();
  DenseMatrix g(latent_.rows(), latent_.cols());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t gi = 0; gi < ng; ++gi) {
      const std::size_t at = r * ng + gi;
      const double mu = s.mu[at], alpha = s.alpha[at];
      // d w_hat / d sign = alpha; the STE passes through sign within the clip.
      for (std::size_t c = groups.begin(gi); c < groups.end(gi); ++c)
        if (!mask_.test(r, c))
          g(r, c) = ste_backward(latent_(r, c) - mu, alpha * grad_effective(r, c), opts_.clip);
      if (!opts_.grad_through_scales) continue;

      // w_hat_i = mu + alpha * s_i with mu = mean w, alpha = mean |w - mu|:
      //   dmu/dw_j = 1/n, dalpha/dw_j = (s_j - mean s) / n,
      //   ds_i/dw_j = ste_i * (delta_ij - dmu/dw_j) when mu is tracked.
      std::size_t n = 0;
      double sum_g = 0.0, sum_gs = 0.0, sum_s = 0.0, sum_ste = 0.0;
      for (std::size_t c = groups.begin(gi); c < groups.end(gi); ++c) {
        if (mask_.test(r, c)) continue;
        const double si = sign_of(latent_(r, c) - mu);
        ++n;
        sum_g += grad_effective(r, c);
        sum_gs += grad_effective(r, c) * si;
        sum_s += si;
        sum_ste += g(r, c);
      }
      if (n == 0) continue;
      const double inv_n = 1.0 / static_cast<double>(n);
      const double s_mean = opts_.use_zero_point ? sum_s * inv_n : 0.0;
      for (std::size_t c = groups.begin(gi); c < groups.end(gi); ++c) {
        if (mask_.test(r, c)) continue;
        const double sj = sign_of(latent_(r, c) - mu);
        double extra = inv_n * (sj - s_mean) * sum_gs;
        if (opts_.use_zero_point) extra += inv_n * sum_g - inv_n * sum_ste;
        g(r, c) += extra;
      }
    }
  return g;
}

PBLinearLayer::Grads PBLinearLayer::backward(const DenseMatrix &batch,
                                             const DenseMatrix &upstream) const {
  if (batch.cols() != in_features() || upstream.cols() != out_features() ||
      batch.rows() != upstream.rows())
    throw DimensionError("PBLinearLayer::backward: shape mismatch");
  const DenseMatrix w_eff = effective_weight();
  Grads g;
  g.latent = latent_gradient(dense_matmul(upstream.transpose(), batch), scales());
  g.bias.assign(out_features(), 0.0);
  for (std::size_t n = 0; n < upstream.rows(); ++n)
    for (std::size_t i = 0; i < out_features(); ++i) g.bias[i] += upstream(n, i);
  g.input = dense_matmul(upstream, w_eff);
  return g;
}

namespace {

constexpr std::size_t kIn = 16, kHidden = 32, kOut = 16;

DenseMatrix gaussian_matrix(std::mt19937_64 &rng, std::size_t rows, std::size_t cols,
                            double sigma) {
  std::normal_distribution<double> nd(0.0, sigma);
  DenseMatrix m(rows, cols);
  for (double &v : m.data()) v = nd(rng);
  return m;
}

// Gaussian weights with a sprinkling of large-magnitude outliers.
DenseMatrix teacher_weights(std::mt19937_64 &rng, std::size_t rows, std::size_t cols) {
  const double sigma = 1.0 / std::sqrt(static_cast<double>(cols));
  DenseMatrix m = gaussian_matrix(rng, rows, cols, sigma);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double &v : m.data())
    if (u(rng) < 0.03) v *= 6.0;
  return m;
}

DenseMatrix tanh_of(DenseMatrix m) {
  for (double &v : m.data()) v = std::tanh(v);
  return m;
}

struct Adam {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  // Updates params[i] for every i where `frozen(i)` is false.
  template <typename Frozen>
  void step(std::span<double> params, std::span<const double> grads, double lr,
            std::size_t t, Frozen frozen) {
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (frozen(i)) continue;
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

double mse(const DenseMatrix &y, const DenseMatrix &t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y.data()[i] - t.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(y.size());
}

std::vector<double> alpha_snapshot(const std::vector<PBLinearLayer> &layers) {
  std::vector<double> out;
  for (const auto &l : layers) {
    auto a = l.scales().alpha;
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

} // namespace

DemoProblem make_demo_problem(std::uint64_t seed, std::size_t samples) {
  std::mt19937_64 rng(seed);
  const DenseMatrix t1 = teacher_weights(rng, kHidden, kIn);
  const DenseMatrix t2 = teacher_weights(rng, kOut, kHidden);
  std::normal_distribution<double> bias_nd(0.0, 0.1);
  std::vector<double> tb1(kHidden), tb2(kOut);
  for (double &v : tb1) v = bias_nd(rng);
  for (double &v : tb2) v = bias_nd(rng);

  DemoProblem p;
  p.inputs = gaussian_matrix(rng, samples, kIn, 1.0);
  DenseMatrix h = dense_matmul(p.inputs, t1.transpose());
  for (std::size_t n = 0; n < samples; ++n)
    for (std::size_t i = 0; i < kHidden; ++i) h(n, i) = std::tanh(h(n, i) + tb1[i]);
  p.targets = dense_matmul(h, t2.transpose());
  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t n = 0; n < samples; ++n)
    for (std::size_t i = 0; i < kOut; ++i) p.targets(n, i) += tb2[i] + noise(rng);

  // The "pre-trained" starting point: teacher plus a small perturbation.
  auto perturb = [&](const DenseMatrix &w) {
    const double sigma = 0.3 / std::sqrt(static_cast<double>(w.cols()));
    return linear_combination(1.0, w, 1.0, gaussian_matrix(rng, w.rows(), w.cols(), sigma));
  };
  p.w1 = perturb(t1);
  p.w2 = perturb(t2);
  p.b1 = tb1;
  p.b2 = tb2;
  return p;
}

TrainResult train_network(const TrainConfig &config) {
  if (!(config.salient_fraction >= 0.0 && config.salient_fraction <= 1.0))
    throw InvalidArgument("train: salient fraction must lie in [0, 1]");
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be > 0");
  if (config.samples == 0) throw InvalidArgument("train: need at least one sample");

  const DemoProblem p = make_demo_problem(config.seed, config.samples);
  const PBLinearLayer::Options opts{config.group_size, config.use_zero_point, config.clip,
                                    config.grad_through_scales};
  std::vector<PBLinearLayer> layers;
  layers.emplace_back(p.w1, p.b1, config.salient_fraction, opts);
  layers.emplace_back(p.w2, p.b2, config.salient_fraction, opts);

  TrainResult result;
  result.initial = layers;

  std::vector<Adam> w_opt, b_opt;
  for (const auto &l : layers) {
    w_opt.emplace_back(l.latent().size());
    b_opt.emplace_back(l.bias().size());
  }

  for (std::size_t step = 0;; ++step) {
    const DenseMatrix h = tanh_of(layers[0].forward(p.inputs));
    const DenseMatrix y = layers[1].forward(h);
    const double loss = mse(y, p.targets);
    if (!std::isfinite(loss))
      throw NumericalError("training diverged at step " + std::to_string(step));
    result.records.push_back({step, loss, alpha_snapshot(layers)});
    if (step == config.steps) break;

    DenseMatrix dy(y.rows(), y.cols());
    const double scale = 2.0 / static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      dy.data()[i] = scale * (y.data()[i] - p.targets.data()[i]);
    auto g2 = layers[1].backward(h, dy);
    DenseMatrix dz = g2.input;
    for (std::size_t i = 0; i < dz.size(); ++i) {
      const double hv = h.data()[i];
      dz.data()[i] *= 1.0 - hv * hv;
    }
    auto g1 = layers[0].backward(p.inputs, dz);

    const PBLinearLayer::Grads *grads[2] = {&g1, &g2};
    for (std::size_t li = 0; li < layers.size(); ++li) {
      auto &l = layers[li];
      const auto &mask = l.mask();
      const std::size_t cols = l.in_features();
      w_opt[li].step(l.latent_mut().data(), grads[li]->latent.data(), config.learning_rate,
                     step + 1, [&](std::size_t i) { return mask.test(i / cols, i % cols); });
      b_opt[li].step(l.bias_mut(), grads[li]->bias, config.learning_rate, step + 1,
                     [](std::size_t) { return false; });
    }
  }
  result.final = std::move(layers);
  return result;
}

std::vector<TrainRecord> train_demo(const TrainConfig &config) {
  return train_network(config).records;
}

std::vector<QuantReport> zero_shot_capacity_probe(std::span<const ProbeLayer> layers,
                                                  std::span<const double> fractions) {
  std::vector<QuantReport> out;
  for (const auto &layer : layers) {
    for (double f : fractions) {
      QuantConfig cfg;
      cfg.salient_fraction = f;
      const PBMatrix pb = rtn_quantize(layer.weight, nullptr, cfg);
      QuantReport r = evaluate(layer.weight, pb, layer.activations);
      std::ostringstream name;
      name << layer.name << '@' << f;
      r.name = name.str();
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<QuantReport> zero_shot_capacity_probe(std::span<const ProbeLayer> layers) {
  static constexpr double kFractions[] = {0.05, 0.1, 0.3, 0.5};
  return zero_shot_capacity_probe(layers, kFractions);
}

} // namespace pbq::qat
