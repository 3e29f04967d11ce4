#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pbq {

/// Packed ±1 vector. Bit i set means element i is -1.
class BinVector {
public:
  BinVector() = default;
  explicit BinVector(std::size_t length) : length_(length), words_((length + 63) / 64, 0) {}

  std::size_t size() const noexcept { return length_; }
  int operator[](std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1 ? -1 : 1; }
  void set_negative(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  bool operator==(const BinVector &) const = default;

private:
  std::size_t length_ = 0;
  std::vector<std::uint64_t> words_;
};

/// +1 for w >= 0 (including -0.0), -1 for w < 0. Throws on NaN.
BinVector sign_binarize(std::span<const double> w);

/// Scalar form of sign_binarize.
inline double sign_of(double w) { return w < 0.0 ? -1.0 : 1.0; }

/// Mean absolute value, the minimiser of ||w - a*sign(w)||^2 over a >= 0.
double optimal_alpha(std::span<const double> w);

/// ||w - alpha*sign(w)||^2, summed directly.
double binarization_error(std::span<const double> w, double alpha);

/// The expanded quadratic alpha^2*n - 2*alpha*||w||_1 + w'w; equals
/// binarization_error up to rounding.
double binarization_error_expanded(std::span<const double> w, double alpha);

/// Straight-through gradient of sign(x): upstream when |x| <= clip, else 0.
inline double ste_backward(double x, double upstream, double clip = 1.0) {
  return (x <= clip && x >= -clip) ? upstream : 0.0;
}

} // namespace pbq
