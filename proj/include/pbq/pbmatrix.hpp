#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pbq/dense_matrix.hpp"
#include "pbq/quant_config.hpp"
#include "pbq/saliency.hpp"
#include "pbq/tensorio.hpp"

namespace pbq {

/// Bits per weight for a binary ratio r and salient width b, counting one
/// bitmap bit per weight for the salient index.
struct BitBudget {
  double r_binary = 1.0;
  unsigned salient_bits = 8;
  double total_bits = 2.0;
};

BitBudget bit_budget(double r_binary, unsigned salient_bits);

/// Per-(row, group) calibration, each stored row-major as rows x n_groups.
struct GroupParams {
  std::size_t rows = 0;
  std::size_t n_groups = 0;
  std::vector<double> alpha;
  std::vector<double> mu;
  std::vector<double> salient_min;
  std::vector<double> salient_scale;
  /// Groups in which every weight is salient (alpha and mu stored as 0).
  std::size_t all_salient_groups = 0;

  std::size_t at(std::size_t r, std::size_t g) const { return r * n_groups + g; }
};

/// Unsalient weights: mu = mean, alpha = mean |w - mu|. Salient weights:
/// MinMax over the group, scale = (max - min) / (2^bits - 1).
GroupParams calibrate_groups(const DenseMatrix &w, const SaliencyMask &mask,
                             std::size_t group_size, unsigned salient_bits);

/// Recomputes the parameters of group g only.
void calibrate_group(const DenseMatrix &w, const SaliencyMask &mask, const ColumnGroups &groups,
                     std::size_t g, unsigned salient_bits, GroupParams &params);

inline double binarize_entry(double w, double mu, double alpha) {
  return w - mu < 0.0 ? mu - alpha : mu + alpha;
}

struct SalientCode {
  std::uint8_t code;
  bool clamped; // w fell outside [min, max] of the calibrated range
};

inline SalientCode quantize_salient(double w, double min, double scale, unsigned bits) {
  if (scale == 0.0) return {0, w != min};
  const double levels = static_cast<double>((1u << bits) - 1);
  const double q = std::round((w - min) / scale);
  if (q < 0.0) return {0, true};
  if (q > levels) return {static_cast<std::uint8_t>(levels), true};
  return {static_cast<std::uint8_t>(q), false};
}

inline double dequantize_salient(std::uint8_t code, double min, double scale) {
  return min + scale * static_cast<double>(code);
}

/// Partially-binarized matrix. Unsalient entries decode to mu + alpha * s with
/// s = ±1 from the sign plane; salient entries decode from 8-bit-or-less codes.
///
/// In memory the sign plane is row-padded like the mask, with 0 at salient
/// positions. Serialization compacts it to unsalient positions only.
class PBMatrix {
public:
  struct Parts {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t group_size = 0;
    unsigned salient_bits = 8;
    std::vector<std::uint64_t> sign_words;
    SaliencyMask mask;
    GroupParams params;
    std::vector<std::uint8_t> salient_q;
  };

  PBMatrix() = default;
  /// Validates every invariant; throws InvalidArgument/DimensionError.
  explicit PBMatrix(Parts parts);

  std::size_t rows() const noexcept { return p_.rows; }
  std::size_t cols() const noexcept { return p_.cols; }
  std::size_t group_size() const noexcept { return p_.group_size; }
  unsigned salient_bits() const noexcept { return p_.salient_bits; }
  ColumnGroups groups() const { return {p_.cols, p_.group_size}; }
  std::size_t n_groups() const { return groups().count(); }

  const SaliencyMask &mask() const noexcept { return p_.mask; }
  const GroupParams &params() const noexcept { return p_.params; }
  std::span<const std::uint8_t> salient_codes() const noexcept { return p_.salient_q; }
  std::span<const std::uint64_t> sign_words() const noexcept { return p_.sign_words; }
  std::span<const std::uint64_t> row_sign_words(std::size_t r) const {
    return {p_.sign_words.data() + r * p_.mask.words_per_row(), p_.mask.words_per_row()};
  }
  /// Index into salient_codes() of row r's first salient entry.
  std::size_t row_code_offset(std::size_t r) const { return row_offsets_[r]; }

  /// -1 or +1 at an unsalient position.
  int sign(std::size_t r, std::size_t c) const {
    return (row_sign_words(r)[c >> 6] >> (c & 63)) & 1 ? -1 : 1;
  }

  std::size_t salient_count() const noexcept { return p_.salient_q.size(); }
  double binary_ratio() const;

  bool operator==(const PBMatrix &o) const;

private:
  Parts p_;
  std::vector<std::size_t> row_offsets_;
};

/// Round-to-nearest construction against a fixed mask: calibrate, then
/// binarize or grid-quantize each entry independently.
PBMatrix assemble(const DenseMatrix &w, const SaliencyMask &mask, const QuantConfig &config);

/// Builds a PBMatrix from quantized sign/code decisions made elsewhere.
class PBMatrixBuilder {
public:
  PBMatrixBuilder(std::size_t rows, std::size_t cols, std::size_t group_size,
                  unsigned salient_bits, SaliencyMask mask, GroupParams params);

  void set_negative(std::size_t r, std::size_t c);
  /// Codes must be pushed in row-major mask order.
  void push_code(std::uint8_t code) { parts_.salient_q.push_back(code); }

  GroupParams &params() { return parts_.params; }
  PBMatrix build() &&;

private:
  PBMatrix::Parts parts_;
};

DenseMatrix dequantize(const PBMatrix &pb);

/// y = dequantize(pb) * x without materializing the matrix.
std::vector<double> pb_matvec(const PBMatrix &pb, std::span<const double> x);

/// Logical payload bits: one per unsalient sign, salient_bits per salient
/// code, one bitmap bit per weight.
std::uint64_t storage_bits(const PBMatrix &pb);

TensorContainer pack(const PBMatrix &pb, std::string_view prefix = "");
PBMatrix unpack(const TensorContainer &c, std::string_view prefix = "");

/// Bytes of the "signs", "salient_q" and "salient_mask" payloads.
std::uint64_t packed_payload_bytes(const TensorContainer &c, std::string_view prefix = "");

} // namespace pbq
