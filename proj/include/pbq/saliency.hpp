#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pbq/dense_matrix.hpp"

namespace pbq {

enum class Criterion { magnitude, hessian };
enum class Granularity { element, column };

/// Row-padded bitmap over a rows x cols matrix; bit (i, j) lives in word
/// i * words_per_row() + j / 64 at position j % 64. Set bits are salient.
class SaliencyMask {
public:
  SaliencyMask() = default;
  SaliencyMask(std::size_t rows, std::size_t cols);
  SaliencyMask(std::size_t rows, std::size_t cols, std::vector<std::uint64_t> words);

  static SaliencyMask full(std::size_t rows, std::size_t cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t words_per_row() const noexcept { return (cols_ + 63) / 64; }

  bool test(std::size_t r, std::size_t c) const {
    return (words_[r * words_per_row() + (c >> 6)] >> (c & 63)) & 1;
  }
  void set(std::size_t r, std::size_t c) {
    words_[r * words_per_row() + (c >> 6)] |= std::uint64_t{1} << (c & 63);
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<const std::uint64_t> row_words(std::size_t r) const {
    return {words_.data() + r * words_per_row(), words_per_row()};
  }

  std::size_t count() const;
  /// Salient entries in row r restricted to columns [begin, end).
  std::size_t count_in(std::size_t r, std::size_t begin, std::size_t end) const;
  double fraction() const;

  bool operator==(const SaliencyMask &) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Column ranges [begin, end) of each group. group_size 0 means one group.
struct ColumnGroups {
  std::size_t cols = 0;
  std::size_t group_size = 0;

  std::size_t count() const;
  std::size_t width() const { return group_size == 0 ? cols : group_size; }
  std::size_t begin(std::size_t g) const { return g * width(); }
  std::size_t end(std::size_t g) const;
  std::size_t of(std::size_t col) const { return group_size == 0 ? 0 : col / group_size; }
};

/// floor(fraction * n + 0.5), the salient count for n candidates.
std::size_t salient_count_for(double fraction, std::size_t n);

/// Top-|w| selection. Element-wise keeps round(fraction * N) entries per
/// group; column-wise keeps whole columns ranked by L1 norm. Ties go to the
/// lower row-major index.
SaliencyMask detect_magnitude(const DenseMatrix &w, double fraction,
                              Granularity granularity = Granularity::element,
                              std::size_t group_size = 0);

/// Ranks entries by w_ij^2 / (Hinv_jj)^2.
SaliencyMask detect_hessian(const DenseMatrix &w, const DenseMatrix &hinv, double fraction,
                            std::size_t group_size = 0,
                            Granularity granularity = Granularity::element);

double hessian_saliency(double w, double hinv_diag);

struct MaskStats {
  std::size_t count = 0;
  double fraction = 0.0;
  std::vector<std::size_t> per_column;
  std::vector<std::size_t> per_row;
};

MaskStats mask_stats(const SaliencyMask &mask);

} // namespace pbq
