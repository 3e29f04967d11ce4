#include "pbq/binarizer.hpp"

#include <cmath>
#include <string>

#include "pbq/error.hpp"

namespace pbq {

BinVector sign_binarize(std::span<const double> w) {
  BinVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (std::isnan(w[i]))
      throw InvalidArgument("sign_binarize: NaN at index " + std::to_string(i));
    if (w[i] < 0.0) out.set_negative(i);
  }
  return out;
}

double optimal_alpha(std::span<const double> w) {
  if (w.empty()) throw InvalidArgument("optimal_alpha: empty vector");
  double l1 = 0.0;
  for (double v : w) l1 += std::abs(v);
  return l1 / static_cast<double>(w.size());
}

double binarization_error(std::span<const double> w, double alpha) {
  double err = 0.0;
  for (double v : w) {
    const double d = v - alpha * sign_of(v);
    err += d * d;
  }
  return err;
}

double binarization_error_expanded(std::span<const double> w, double alpha) {
  double l1 = 0.0, sq = 0.0;
  for (double v : w) {
    l1 += std::abs(v);
    sq += v * v;
  }
  return alpha * alpha * static_cast<double>(w.size()) - 2.0 * alpha * l1 + sq;
}

} // namespace pbq
