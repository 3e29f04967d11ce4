#include "pbq/pbmatrix.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <string>

#include "pbq/binarizer.hpp"
#include "pbq/error.hpp"
#include "pbq/kernels.hpp"

namespace pbq {

void QuantConfig::validate() const {
  if (!(salient_fraction >= 0.0 && salient_fraction <= 1.0))
    throw InvalidArgument("salient fraction must lie in [0, 1]");
  if (salient_bits < 1 || salient_bits > 8)
    throw InvalidArgument("salient bits must lie in [1, 8]");
  if (!(damping_fraction >= 0.0) || !std::isfinite(damping_fraction))
    throw InvalidArgument("damping fraction must be a finite value >= 0");
}

BitBudget bit_budget(double r_binary, unsigned salient_bits) {
  if (!(r_binary >= 0.0 && r_binary <= 1.0))
    throw InvalidArgument("binary ratio must lie in [0, 1], got " + std::to_string(r_binary));
  if (salient_bits < 1) throw InvalidArgument("salient bits must be >= 1");
  const double b = salient_bits;
  // r + b(1 - r) + 1, rearranged so (0.9, 8) lands on 2.7 exactly.
  return {r_binary, salient_bits, (b + 1.0) - (b - 1.0) * r_binary};
}

void calibrate_group(const DenseMatrix &w, const SaliencyMask &mask, const ColumnGroups &groups,
                     std::size_t g, unsigned salient_bits, GroupParams &params) {
  const std::size_t c0 = groups.begin(g), c1 = groups.end(g);
  const double levels = static_cast<double>((1u << salient_bits) - 1);
  std::vector<double> resid;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const std::size_t at = params.at(r, g);
    double sum = 0.0;
    std::size_t n_unsal = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t c = c0; c < c1; ++c) {
      if (mask.test(r, c)) {
        lo = std::min(lo, w(r, c));
        hi = std::max(hi, w(r, c));
      } else {
        sum += w(r, c);
        ++n_unsal;
      }
    }
    if (n_unsal == 0) {
      params.alpha[at] = 0.0;
      params.mu[at] = 0.0;
    } else {
      const double mu = sum / static_cast<double>(n_unsal);
      resid.clear();
      for (std::size_t c = c0; c < c1; ++c)
        if (!mask.test(r, c)) resid.push_back(w(r, c) - mu);
      params.mu[at] = mu;
      params.alpha[at] = optimal_alpha(resid);
    }
    if (n_unsal == c1 - c0) {
      params.salient_min[at] = 0.0;
      params.salient_scale[at] = 0.0;
    } else {
      params.salient_min[at] = lo;
      params.salient_scale[at] = (hi - lo) / levels;
    }
  }
}

GroupParams calibrate_groups(const DenseMatrix &w, const SaliencyMask &mask,
                             std::size_t group_size, unsigned salient_bits) {
  if (mask.rows() != w.rows() || mask.cols() != w.cols())
    throw DimensionError("mask shape does not match the weight matrix");
  const ColumnGroups groups{w.cols(), group_size};
  GroupParams p;
  p.rows = w.rows();
  p.n_groups = groups.count();
  const std::size_t n = p.rows * p.n_groups;
  p.alpha.assign(n, 0.0);
  p.mu.assign(n, 0.0);
  p.salient_min.assign(n, 0.0);
  p.salient_scale.assign(n, 0.0);
  for (std::size_t g = 0; g < p.n_groups; ++g) {
    calibrate_group(w, mask, groups, g, salient_bits, p);
    for (std::size_t r = 0; r < p.rows; ++r)
      if (mask.count_in(r, groups.begin(g), groups.end(g)) == groups.end(g) - groups.begin(g))
        ++p.all_salient_groups;
  }
  return p;
}

PBMatrix::PBMatrix(Parts parts) : p_(std::move(parts)) {
  const std::size_t rows = p_.rows, cols = p_.cols;
  if (p_.mask.rows() != rows || p_.mask.cols() != cols)
    throw DimensionError("PBMatrix: mask shape mismatch");
  if (p_.salient_bits < 1 || p_.salient_bits > 8)
    throw InvalidArgument("PBMatrix: salient bits must lie in [1, 8]");
  if (p_.sign_words.size() != rows * p_.mask.words_per_row())
    throw DimensionError("PBMatrix: sign plane has the wrong word count");
  const std::size_t ng = ColumnGroups{cols, p_.group_size}.count();
  const auto &gp = p_.params;
  if (gp.rows != rows || gp.n_groups != ng || gp.alpha.size() != rows * ng ||
      gp.mu.size() != rows * ng || gp.salient_min.size() != rows * ng ||
      gp.salient_scale.size() != rows * ng)
    throw DimensionError("PBMatrix: group parameters must be rows x n_groups");
  if (p_.salient_q.size() != p_.mask.count())
    throw DimensionError("PBMatrix: " + std::to_string(p_.salient_q.size()) +
                         " salient codes for " + std::to_string(p_.mask.count()) +
                         " salient positions");
  const unsigned limit = 1u << p_.salient_bits;
  for (auto q : p_.salient_q)
    if (q >= limit) throw InvalidArgument("PBMatrix: salient code exceeds bit width");
  for (std::size_t i = 0; i < rows * ng; ++i) {
    if (!(gp.alpha[i] >= 0.0) || !std::isfinite(gp.alpha[i]) || !std::isfinite(gp.mu[i]) ||
        !std::isfinite(gp.salient_min[i]) || !(gp.salient_scale[i] >= 0.0) ||
        !std::isfinite(gp.salient_scale[i]))
      throw InvalidArgument("PBMatrix: invalid group parameter at " + std::to_string(i));
  }
  for (std::size_t i = 0; i < p_.sign_words.size(); ++i)
    if (p_.sign_words[i] & p_.mask.words()[i])
      throw InvalidArgument("PBMatrix: sign bit set at a salient position");

  row_offsets_.resize(rows + 1, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t n = 0;
    for (auto wd : p_.mask.row_words(r)) n += std::popcount(wd);
    row_offsets_[r + 1] = row_offsets_[r] + n;
  }
}

double PBMatrix::binary_ratio() const {
  const std::size_t n = p_.rows * p_.cols;
  return n == 0 ? 1.0 : 1.0 - static_cast<double>(salient_count()) / static_cast<double>(n);
}

bool PBMatrix::operator==(const PBMatrix &o) const {
  const auto &a = p_.params, &b = o.p_.params;
  return p_.rows == o.p_.rows && p_.cols == o.p_.cols && p_.group_size == o.p_.group_size &&
         p_.salient_bits == o.p_.salient_bits && p_.sign_words == o.p_.sign_words &&
         p_.mask == o.p_.mask && p_.salient_q == o.p_.salient_q && a.alpha == b.alpha &&
         a.mu == b.mu && a.salient_min == b.salient_min && a.salient_scale == b.salient_scale;
}

PBMatrixBuilder::PBMatrixBuilder(std::size_t rows, std::size_t cols, std::size_t group_size,
                                 unsigned salient_bits, SaliencyMask mask, GroupParams params) {
  parts_.rows = rows;
  parts_.cols = cols;
  parts_.group_size = group_size;
  parts_.salient_bits = salient_bits;
  parts_.sign_words.assign(rows * mask.words_per_row(), 0);
  parts_.mask = std::move(mask);
  parts_.params = std::move(params);
  parts_.salient_q.reserve(parts_.mask.count());
}

void PBMatrixBuilder::set_negative(std::size_t r, std::size_t c) {
  parts_.sign_words[r * parts_.mask.words_per_row() + (c >> 6)] |= std::uint64_t{1} << (c & 63);
}

PBMatrix PBMatrixBuilder::build() && { return PBMatrix(std::move(parts_)); }

PBMatrix assemble(const DenseMatrix &w, const SaliencyMask &mask, const QuantConfig &config) {
  config.validate();
  GroupParams params = calibrate_groups(w, mask, config.group_size, config.salient_bits);
  const ColumnGroups groups{w.cols(), config.group_size};
  PBMatrixBuilder b(w.rows(), w.cols(), config.group_size, config.salient_bits, mask, params);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
      const std::size_t at = params.at(r, groups.of(c));
      if (mask.test(r, c)) {
        b.push_code(quantize_salient(w(r, c), params.salient_min[at], params.salient_scale[at],
                                     config.salient_bits)
                        .code);
      } else if (w(r, c) - params.mu[at] < 0.0) {
        b.set_negative(r, c);
      }
    }
  }
  return std::move(b).build();
}

DenseMatrix dequantize(const PBMatrix &pb) {
  DenseMatrix out(pb.rows(), pb.cols());
  const auto groups = pb.groups();
  const auto &p = pb.params();
  for (std::size_t r = 0; r < pb.rows(); ++r) {
    std::size_t k = pb.row_code_offset(r);
    for (std::size_t c = 0; c < pb.cols(); ++c) {
      const std::size_t at = p.at(r, groups.of(c));
      if (pb.mask().test(r, c))
        out(r, c) = dequantize_salient(pb.salient_codes()[k++], p.salient_min[at],
                                       p.salient_scale[at]);
      else
        out(r, c) = p.mu[at] + p.alpha[at] * pb.sign(r, c);
    }
  }
  return out;
}

std::vector<double> pb_matvec(const PBMatrix &pb, std::span<const double> x) {
  if (x.size() != pb.cols())
    throw DimensionError("pb_matvec: vector length " + std::to_string(x.size()) + " != " +
                         std::to_string(pb.cols()) + " columns");
  const auto &kern = kernels::active();
  const auto groups = pb.groups();
  const auto &p = pb.params();
  const auto codes = pb.salient_codes();
  std::vector<double> y(pb.rows(), 0.0);
  for (std::size_t r = 0; r < pb.rows(); ++r) {
    const auto mask_row = pb.mask().row_words(r);
    const auto sign_row = pb.row_sign_words(r);
    std::size_t k = pb.row_code_offset(r);
    double acc = 0.0;
    for (std::size_t g = 0; g < groups.count(); ++g) {
      const std::size_t c0 = groups.begin(g), c1 = groups.end(g);
      const std::size_t at = p.at(r, g);
      const auto s = kern.masked_sums(sign_row.data(), mask_row.data(), x.data(), c0, c1);
      // sum of s_j x_j over unsalient j = (positives) - (negatives)
      acc += p.mu[at] * s.unsalient + p.alpha[at] * (s.unsalient - 2.0 * s.negative);

      double sal_x = 0.0, sal_qx = 0.0;
      for (std::size_t wi = c0 >> 6; wi <= (c1 - 1) >> 6; ++wi) {
        std::uint64_t bits = mask_row[wi];
        if (wi == c0 >> 6) bits &= ~std::uint64_t{0} << (c0 & 63);
        if (wi == (c1 - 1) >> 6 && (c1 & 63) != 0) bits &= (std::uint64_t{1} << (c1 & 63)) - 1;
        while (bits != 0) {
          const std::size_t c = wi * 64 + std::countr_zero(bits);
          bits &= bits - 1;
          sal_x += x[c];
          sal_qx += static_cast<double>(codes[k++]) * x[c];
        }
      }
      acc += p.salient_min[at] * sal_x + p.salient_scale[at] * sal_qx;
    }
    y[r] = acc;
  }
  return y;
}

std::uint64_t storage_bits(const PBMatrix &pb) {
  const std::uint64_t n = pb.rows() * pb.cols();
  const std::uint64_t sal = pb.salient_count();
  return (n - sal) + sal * pb.salient_bits() + n;
}

namespace {

std::string key(std::string_view prefix, const char *name) {
  return std::string(prefix) + name;
}

} // namespace

TensorContainer pack(const PBMatrix &pb, std::string_view prefix) {
  const std::size_t rows = pb.rows(), cols = pb.cols(), ng = pb.n_groups();
  const std::uint64_t n_unsal = rows * cols - pb.salient_count();

  std::vector<std::uint64_t> signs((n_unsal + 63) / 64, 0);
  std::uint64_t bit = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      if (pb.mask().test(r, c)) continue;
      if (pb.sign(r, c) < 0) signs[bit >> 6] |= std::uint64_t{1} << (bit & 63);
      ++bit;
    }

  const std::vector<std::uint64_t> meta{rows, cols, pb.group_size(), pb.salient_bits()};
  const auto &p = pb.params();
  TensorContainer c;
  c.add(make_tensor(key(prefix, "meta"), {4}, std::span<const std::uint64_t>(meta)));
  c.add(make_tensor(key(prefix, "signs"), {signs.size()}, std::span<const std::uint64_t>(signs)));
  c.add(make_tensor(key(prefix, "salient_mask"), {rows, pb.mask().words_per_row()},
                    pb.mask().words()));
  c.add(make_tensor(key(prefix, "salient_q"), {pb.salient_count()}, pb.salient_codes()));
  c.add(make_tensor(key(prefix, "alpha"), {rows, ng}, std::span<const double>(p.alpha)));
  c.add(make_tensor(key(prefix, "mu"), {rows, ng}, std::span<const double>(p.mu)));
  c.add(make_tensor(key(prefix, "salient_min"), {rows, ng},
                    std::span<const double>(p.salient_min)));
  c.add(make_tensor(key(prefix, "salient_scale"), {rows, ng},
                    std::span<const double>(p.salient_scale)));
  return c;
}

PBMatrix unpack(const TensorContainer &c, std::string_view prefix) {
  const auto meta = as_u64(c.at(key(prefix, "meta")));
  if (meta.size() != 4) throw DimensionError("unpack: 'meta' must hold 4 values");
  const std::size_t rows = meta[0], cols = meta[1], group_size = meta[2];
  if (meta[3] < 1 || meta[3] > 8) throw InvalidArgument("unpack: salient bits out of range");
  const auto bits = static_cast<unsigned>(meta[3]);
  const std::size_t ng = ColumnGroups{cols, group_size}.count();

  SaliencyMask mask(rows, cols, as_u64(c.at(key(prefix, "salient_mask"))));

  auto read_params = [&](const char *name) {
    const Tensor &t = c.at(key(prefix, name));
    if (t.shape != std::vector<std::uint64_t>{rows, ng})
      throw DimensionError(std::string("unpack: '") + name + "' must have shape [rows, n_groups]");
    return as_f64(t);
  };
  GroupParams p;
  p.rows = rows;
  p.n_groups = ng;
  p.alpha = read_params("alpha");
  p.mu = read_params("mu");
  p.salient_min = read_params("salient_min");
  p.salient_scale = read_params("salient_scale");

  const auto signs = as_u64(c.at(key(prefix, "signs")));
  const std::uint64_t n_unsal = rows * cols - mask.count();
  if (signs.size() != (n_unsal + 63) / 64)
    throw DimensionError("unpack: 'signs' holds " + std::to_string(signs.size()) +
                         " words for " + std::to_string(n_unsal) + " unsalient weights");

  PBMatrixBuilder b(rows, cols, group_size, bits, mask, std::move(p));
  std::uint64_t bit = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t col = 0; col < cols; ++col) {
      if (mask.test(r, col)) continue;
      if ((signs[bit >> 6] >> (bit & 63)) & 1) b.set_negative(r, col);
      ++bit;
    }
  for (auto q : as_u8(c.at(key(prefix, "salient_q")))) b.push_code(q);
  return std::move(b).build();
}

std::uint64_t packed_payload_bytes(const TensorContainer &c, std::string_view prefix) {
  return c.at(key(prefix, "signs")).payload.size() +
         c.at(key(prefix, "salient_q")).payload.size() +
         c.at(key(prefix, "salient_mask")).payload.size();
}

} // namespace pbq
