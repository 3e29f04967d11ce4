#pragma once

#include <cstddef>
#include <string>

#include "pbq/dense_matrix.hpp"
#include "pbq/hessian.hpp"
#include "pbq/pbmatrix.hpp"
#include "pbq/quant_config.hpp"

namespace pbq {

/// Per-layer summary. Errors are ||WX - W_hat X||_F and that norm divided by
/// ||WX||_F (0 when both vanish).
struct QuantReport {
  std::string name;
  double frobenius_error = 0.0;
  double relative_error = 0.0;
  double bits_per_weight = 0.0;
  std::size_t salient_count = 0;
  double seconds = 0.0;
  /// Salient entries that drifted outside their calibrated MinMax range
  /// during compensation and were saturated.
  std::size_t clamped_salient = 0;
  std::size_t all_salient_groups = 0;
};

/// Salient mask per config. hinv is required for the Hessian criterion.
SaliencyMask detect_salient(const DenseMatrix &w, const DenseMatrix *hinv,
                            const QuantConfig &config);

/// Detect, calibrate and round each entry independently (no compensation).
PBMatrix rtn_quantize(const DenseMatrix &w, const DenseMatrix *hinv, const QuantConfig &config);

struct PbGptqResult {
  PBMatrix matrix;
  QuantReport report;
};

/// Column-by-column partial binarization with inverse-Hessian error
/// compensation. config.damping_fraction is used for the Hessian inverse.
/// The report's errors are measured on the calibration data through H.
PbGptqResult pbgptq_quantize(const DenseMatrix &w, const HessianState &hessian,
                             const QuantConfig &config);

/// Lower-level entry point with a precomputed inverse.
PbGptqResult pbgptq_quantize(const DenseMatrix &w, const HessianInverse &inverse,
                             const QuantConfig &config);

/// ||WX - W_hat X||_F and relative error against explicit activations.
QuantReport evaluate(const DenseMatrix &w, const PBMatrix &pb, const DenseMatrix &x);

/// The same errors computed from H = 2 X X^T instead of X.
QuantReport evaluate_with_hessian(const DenseMatrix &w, const DenseMatrix &w_hat,
                                  const DenseMatrix &h);

} // namespace pbq
