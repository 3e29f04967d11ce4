#include "pbq/saliency.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "pbq/error.hpp"

namespace pbq {

SaliencyMask::SaliencyMask(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), words_(rows * ((cols + 63) / 64), 0) {}

SaliencyMask::SaliencyMask(std::size_t rows, std::size_t cols, std::vector<std::uint64_t> words)
    : rows_(rows), cols_(cols), words_(std::move(words)) {
  if (words_.size() != rows * words_per_row())
    throw DimensionError("SaliencyMask: expected " + std::to_string(rows * words_per_row()) +
                         " words, got " + std::to_string(words_.size()));
  if (cols % 64 != 0) {
    const std::uint64_t pad = ~((std::uint64_t{1} << (cols % 64)) - 1);
    for (std::size_t r = 0; r < rows; ++r)
      if (words_[r * words_per_row() + words_per_row() - 1] & pad)
        throw InvalidArgument("SaliencyMask: bits set past the last column in row " +
                              std::to_string(r));
  }
}

SaliencyMask SaliencyMask::full(std::size_t rows, std::size_t cols) {
  SaliencyMask m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m.set(r, c);
  return m;
}

std::size_t SaliencyMask::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += std::popcount(w);
  return n;
}

std::size_t SaliencyMask::count_in(std::size_t r, std::size_t begin, std::size_t end) const {
  std::size_t n = 0;
  for (std::size_t c = begin; c < end; ++c) n += test(r, c);
  return n;
}

double SaliencyMask::fraction() const {
  const std::size_t n = rows_ * cols_;
  return n == 0 ? 0.0 : static_cast<double>(count()) / static_cast<double>(n);
}

std::size_t ColumnGroups::count() const {
  if (cols == 0) return 0;
  return group_size == 0 ? 1 : (cols + group_size - 1) / group_size;
}

std::size_t ColumnGroups::end(std::size_t g) const {
  return std::min(cols, begin(g) + width());
}

std::size_t salient_count_for(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

double hessian_saliency(double w, double hinv_diag) {
  return (w * w) / (hinv_diag * hinv_diag);
}

namespace {

void check_fraction(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("salient fraction must lie in [0, 1], got " + std::to_string(fraction));
}

// Descending metric, ascending index on ties.
struct Ranked {
  double metric;
  std::size_t index;
};

void keep_top(std::vector<Ranked> &items, std::size_t k) {
  k = std::min(k, items.size());
  auto better = [](const Ranked &a, const Ranked &b) {
    return a.metric > b.metric || (a.metric == b.metric && a.index < b.index);
  };
  if (k < items.size()) std::nth_element(items.begin(), items.begin() + k, items.end(), better);
  items.resize(k);
}

// metric(r, c) scores one entry; larger means more salient.
template <typename Metric>
SaliencyMask select(std::size_t rows, std::size_t cols, double fraction,
                    Granularity granularity, std::size_t group_size, Metric metric) {
  check_fraction(fraction);
  SaliencyMask mask(rows, cols);
  const ColumnGroups groups{cols, group_size};
  for (std::size_t g = 0; g < groups.count(); ++g) {
    const std::size_t c0 = groups.begin(g), c1 = groups.end(g);
    std::vector<Ranked> items;
    if (granularity == Granularity::element) {
      items.reserve(rows * (c1 - c0));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = c0; c < c1; ++c) items.push_back({metric(r, c), r * cols + c});
      keep_top(items, salient_count_for(fraction, rows * (c1 - c0)));
      for (const auto &it : items) mask.set(it.index / cols, it.index % cols);
    } else {
      for (std::size_t c = c0; c < c1; ++c) {
        double score = 0.0;
        for (std::size_t r = 0; r < rows; ++r) score += metric(r, c);
        items.push_back({score, c});
      }
      keep_top(items, salient_count_for(fraction, c1 - c0));
      for (const auto &it : items)
        for (std::size_t r = 0; r < rows; ++r) mask.set(r, it.index);
    }
  }
  return mask;
}

} // namespace

SaliencyMask detect_magnitude(const DenseMatrix &w, double fraction, Granularity granularity,
                              std::size_t group_size) {
  return select(w.rows(), w.cols(), fraction, granularity, group_size,
                [&](std::size_t r, std::size_t c) { return std::abs(w(r, c)); });
}

SaliencyMask detect_hessian(const DenseMatrix &w, const DenseMatrix &hinv, double fraction,
                            std::size_t group_size, Granularity granularity) {
  if (hinv.rows() != w.cols() || hinv.cols() != w.cols())
    throw DimensionError("detect_hessian: inverse Hessian must be " + std::to_string(w.cols()) +
                         "x" + std::to_string(w.cols()));
  for (std::size_t j = 0; j < hinv.rows(); ++j)
    if (!(hinv(j, j) > 0.0))
      throw InvalidArgument("detect_hessian: nonpositive inverse-Hessian diagonal at " +
                            std::to_string(j));
  return select(w.rows(), w.cols(), fraction, granularity, group_size,
                [&](std::size_t r, std::size_t c) { return hessian_saliency(w(r, c), hinv(c, c)); });
}

MaskStats mask_stats(const SaliencyMask &mask) {
  MaskStats s;
  s.per_column.assign(mask.cols(), 0);
  s.per_row.assign(mask.rows(), 0);
  for (std::size_t r = 0; r < mask.rows(); ++r)
    for (std::size_t c = 0; c < mask.cols(); ++c)
      if (mask.test(r, c)) {
        ++s.per_column[c];
        ++s.per_row[r];
      }
  s.count = mask.count();
  s.fraction = mask.fraction();
  return s;
}

} // namespace pbq
