#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pbq/dense_matrix.hpp"
#include "pbq/pbgptq.hpp"
#include "pbq/saliency.hpp"

namespace pbq::qat {

/// Linear layer trained with full-precision latent weights. Salient entries
/// are frozen at construction; the rest are binarized on the fly as
/// mu + alpha * sign(w - mu) with mu, alpha recomputed from the current
/// latent unsalient entries of each (row, group).
class PBLinearLayer {
public:
  struct Options {
    std::size_t group_size = 0;
    bool use_zero_point = true; // false: mu = 0, alpha = mean |w|
    double clip = 1.0;          // STE pass-through region |w - mu| <= clip
    /// Also differentiate through mu = mean(w) and alpha = mean|w - mu|
    /// (the sign still uses the STE). Off: both are constants of the step.
    bool grad_through_scales = false;
  };

  PBLinearLayer(DenseMatrix latent, std::vector<double> bias, double salient_fraction,
                Options options);
  PBLinearLayer(DenseMatrix latent, std::vector<double> bias, SaliencyMask mask,
                Options options);

  std::size_t in_features() const noexcept { return latent_.cols(); }
  std::size_t out_features() const noexcept { return latent_.rows(); }

  const DenseMatrix &latent() const noexcept { return latent_; }
  const std::vector<double> &bias() const noexcept { return bias_; }
  const SaliencyMask &mask() const noexcept { return mask_; }
  const Options &options() const noexcept { return opts_; }

  /// Current (mu, alpha) per (row, group), row-major rows x n_groups.
  struct Scales {
    std::vector<double> mu;
    std::vector<double> alpha;
  };
  Scales scales() const;

  /// The materialized weight used by forward.
  DenseMatrix effective_weight() const;

  std::vector<double> forward(std::span<const double> x) const;
  /// Batch rows are samples: (n x in) -> (n x out).
  DenseMatrix forward(const DenseMatrix &batch) const;

  struct Grads {
    DenseMatrix latent; // zero at salient positions
    std::vector<double> bias;
    DenseMatrix input;  // n x in
  };
  /// upstream is dL/d(output), n x out. alpha and mu are constants of the step.
  Grads backward(const DenseMatrix &batch, const DenseMatrix &upstream) const;

  /// Gradient for a given dL/d(effective weight), applying the STE and the
  /// salient freeze. Exposed for finite-difference checks.
  DenseMatrix latent_gradient(const DenseMatrix &grad_effective, const Scales &s) const;

  /// Mutable access for optimizers; salient entries must not be written.
  DenseMatrix &latent_mut() noexcept { return latent_; }
  std::vector<double> &bias_mut() noexcept { return bias_; }

private:
  DenseMatrix latent_;
  std::vector<double> bias_;
  SaliencyMask mask_;
  Options opts_;
};

/// One row of the training log.
struct TrainRecord {
  std::size_t step = 0;
  double loss = 0.0;
  std::vector<double> alpha_snapshot; // per-row alpha, first layer then second
};

struct TrainConfig {
  double salient_fraction = 0.3;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  std::size_t group_size = 0;
  bool use_zero_point = true;
  double clip = 1.0;
  /// See PBLinearLayer::Options. With mu and alpha held constant, Adam drives
  /// |w - mu| outward and alpha inflates until the loss rises again.
  bool grad_through_scales = true;
  std::size_t samples = 256;
};

struct TrainResult {
  std::vector<TrainRecord> records; // steps + 1 entries, step 0 is pre-training
  std::vector<PBLinearLayer> initial;
  std::vector<PBLinearLayer> final;
};

/// Fits a 16 -> 32 -> 16 tanh network of PBLinearLayers to a noisy teacher
/// on seeded synthetic data, starting from a perturbed copy of the teacher.
/// Full-batch Adam (no weight decay). Throws NumericalError if the loss
/// becomes non-finite.
TrainResult train_network(const TrainConfig &config);

std::vector<TrainRecord> train_demo(const TrainConfig &config);

/// Teacher/student setup shared by train_network and reference trainers.
struct DemoProblem {
  DenseMatrix inputs;  // n x 16
  DenseMatrix targets; // n x 16
  DenseMatrix w1, w2;  // student initialisation, 32 x 16 and 16 x 32
  std::vector<double> b1, b2;
};
DemoProblem make_demo_problem(std::uint64_t seed, std::size_t samples);

struct ProbeLayer {
  std::string name;
  DenseMatrix weight;      // d_o x d_i
  DenseMatrix activations; // d_i x n
};

/// No-training partial binarization (magnitude mask, RTN) of each layer at
/// every fraction; reports are named "<layer>@<fraction>".
std::vector<QuantReport> zero_shot_capacity_probe(std::span<const ProbeLayer> layers,
                                                  std::span<const double> fractions);

std::vector<QuantReport> zero_shot_capacity_probe(std::span<const ProbeLayer> layers);

} // namespace pbq::qat
