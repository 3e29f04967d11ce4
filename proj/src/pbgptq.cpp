#include "pbq/pbgptq.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "pbq/error.hpp"
#include "pbq/kernels.hpp"

namespace pbq {
namespace {

double relative(double err, double ref) { return ref > 0.0 ? err / ref : (err > 0.0 ? INFINITY : 0.0); }

void fill_budget(QuantReport &r, const PBMatrix &pb) {
  r.salient_count = pb.salient_count();
  r.bits_per_weight = bit_budget(pb.binary_ratio(), pb.salient_bits()).total_bits;
  r.all_salient_groups = pb.params().all_salient_groups;
}

} // namespace

SaliencyMask detect_salient(const DenseMatrix &w, const DenseMatrix *hinv,
                            const QuantConfig &config) {
  config.validate();
  if (config.criterion == Criterion::hessian) {
    if (hinv == nullptr) throw InvalidArgument("Hessian criterion needs an inverse Hessian");
    return detect_hessian(w, *hinv, config.salient_fraction, config.group_size,
                          config.granularity);
  }
  return detect_magnitude(w, config.salient_fraction, config.granularity, config.group_size);
}

PBMatrix rtn_quantize(const DenseMatrix &w, const DenseMatrix *hinv, const QuantConfig &config) {
  return assemble(w, detect_salient(w, hinv, config), config);
}

PbGptqResult pbgptq_quantize(const DenseMatrix &w, const HessianState &hessian,
                             const QuantConfig &config) {
  if (hessian.dim() != w.cols())
    throw DimensionError("pbgptq: Hessian dimension " + std::to_string(hessian.dim()) +
                         " != weight columns " + std::to_string(w.cols()));
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  PbGptqResult out = pbgptq_quantize(w, hessian.finalize(config.damping_fraction), config);
  const QuantReport errs = evaluate_with_hessian(w, dequantize(out.matrix), hessian.matrix());
  out.report.frobenius_error = errs.frobenius_error;
  out.report.relative_error = errs.relative_error;
  out.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

PbGptqResult pbgptq_quantize(const DenseMatrix &w, const HessianInverse &inverse,
                             const QuantConfig &config) {
  config.validate();
  const std::size_t rows = w.rows(), cols = w.cols();
  const DenseMatrix &u = inverse.hinv_chol;
  if (u.rows() != cols || u.cols() != cols)
    throw DimensionError("pbgptq: inverse Hessian does not match weight columns");
  const auto start = std::chrono::steady_clock::now();

  SaliencyMask mask = detect_salient(w, &inverse.hinv, config);
  GroupParams params = calibrate_groups(w, mask, config.group_size, config.salient_bits);
  const ColumnGroups groups{cols, config.group_size};

  DenseMatrix work = w;
  std::vector<std::uint8_t> codes(rows * cols, 0);
  std::vector<bool> negative(rows * cols, false);
  std::size_t clamped = 0;

  for (std::size_t q = 0; q < cols; ++q) {
    const std::size_t g = groups.of(q);
    if (config.refit_groups && q == groups.begin(g))
      calibrate_group(work, mask, groups, g, config.salient_bits, params);
    const double d = u(q, q);
    const auto tail = u.row(q).subspan(q + 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const double wq = work(r, q);
      const std::size_t at = params.at(r, g);
      double wh;
      if (mask.test(r, q)) {
        const auto sc = quantize_salient(wq, params.salient_min[at], params.salient_scale[at],
                                         config.salient_bits);
        clamped += sc.clamped;
        codes[r * cols + q] = sc.code;
        wh = dequantize_salient(sc.code, params.salient_min[at], params.salient_scale[at]);
      } else {
        negative[r * cols + q] = wq - params.mu[at] < 0.0;
        wh = binarize_entry(wq, params.mu[at], params.alpha[at]);
      }
      const double err = (wq - wh) / d;
      kernels::axpy(-err, tail, work.row(r).subspan(q + 1));
    }
  }

  PBMatrixBuilder b(rows, cols, config.group_size, config.salient_bits, mask, std::move(params));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.test(r, c))
        b.push_code(codes[r * cols + c]);
      else if (negative[r * cols + c])
        b.set_negative(r, c);
    }

  PbGptqResult out{std::move(b).build(), {}};
  fill_budget(out.report, out.matrix);
  out.report.clamped_salient = clamped;
  out.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

QuantReport evaluate(const DenseMatrix &w, const PBMatrix &pb, const DenseMatrix &x) {
  if (pb.rows() != w.rows() || pb.cols() != w.cols())
    throw DimensionError("evaluate: quantized matrix shape differs from the weights");
  if (x.rows() != w.cols())
    throw DimensionError("evaluate: activations have " + std::to_string(x.rows()) +
                         " rows, weights have " + std::to_string(w.cols()) + " columns");
  const DenseMatrix ref = dense_matmul(w, x);
  const DenseMatrix approx = dense_matmul(dequantize(pb), x);
  QuantReport r;
  fill_budget(r, pb);
  r.frobenius_error = frobenius_norm(linear_combination(1.0, ref, -1.0, approx));
  r.relative_error = relative(r.frobenius_error, frobenius_norm(ref));
  return r;
}

QuantReport evaluate_with_hessian(const DenseMatrix &w, const DenseMatrix &w_hat,
                                  const DenseMatrix &h) {
  if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols() || h.rows() != w.cols() ||
      h.cols() != w.cols())
    throw DimensionError("evaluate_with_hessian: shape mismatch");
  // ||A X||_F^2 = sum_r a_r^T (X X^T) a_r = 1/2 sum_r a_r^T H a_r
  double err2 = 0.0, ref2 = 0.0;
  std::vector<double> delta(w.cols()), hd(w.cols());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) delta[c] = w(r, c) - w_hat(r, c);
    for (std::size_t c = 0; c < w.cols(); ++c) {
      hd[c] = kernels::dot(h.row(c), delta);
    }
    err2 += kernels::dot(delta, hd);
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) hd[c] = kernels::dot(h.row(c), wr);
    ref2 += kernels::dot(wr, hd);
  }
  QuantReport rep;
  rep.frobenius_error = std::sqrt(std::max(0.0, 0.5 * err2));
  rep.relative_error = relative(rep.frobenius_error, std::sqrt(std::max(0.0, 0.5 * ref2)));
  return rep;
}

} // namespace pbq
