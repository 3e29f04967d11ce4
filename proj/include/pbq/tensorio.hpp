#pragma once

// PBTC tensor container: a flat, little-endian list of named tensors.
//
//   "PBTC" | u32 version (=1) | u32 count
//   per entry:
//     u16 name_len | name bytes (UTF-8) | u8 dtype | u8 ndim | ndim x u64 dims
//     u64 payload_len | payload | zero padding until the file offset is a multiple of 8
//
// dtype codes: 0 = f64, 1 = f32, 2 = u8, 3 = u64.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbq/dense_matrix.hpp"

namespace pbq {

enum class DType : std::uint8_t { f64 = 0, f32 = 1, u8 = 2, u64 = 3 };

std::size_t dtype_size(DType t);

struct Tensor {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint64_t> shape;
  std::vector<std::byte> payload; // little-endian element bytes

  std::uint64_t element_count() const;

  bool operator==(const Tensor &) const = default;
};

Tensor make_tensor(std::string name, const DenseMatrix &m, DType dtype = DType::f64);
Tensor make_tensor(std::string name, std::vector<std::uint64_t> shape,
                   std::span<const double> values, DType dtype = DType::f64);
Tensor make_tensor(std::string name, std::vector<std::uint64_t> shape,
                   std::span<const std::uint64_t> values);
Tensor make_tensor(std::string name, std::vector<std::uint64_t> shape,
                   std::span<const std::uint8_t> values);

/// Float tensors (f64 or f32, upcast) as doubles.
std::vector<double> as_f64(const Tensor &t);
std::vector<std::uint64_t> as_u64(const Tensor &t);
std::vector<std::uint8_t> as_u8(const Tensor &t);

/// Rank-2 float tensor as a matrix. Rejects non-finite values.
DenseMatrix as_matrix(const Tensor &t);

class TensorContainer {
public:
  TensorContainer() = default;

  /// Appends a tensor; throws InvalidArgument on a duplicate name or a payload
  /// whose length disagrees with shape and dtype.
  void add(Tensor t);

  const std::vector<Tensor> &entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const Tensor *find(std::string_view name) const;
  /// Like find, but throws InvalidArgument naming the missing tensor.
  const Tensor &at(std::string_view name) const;

  bool operator==(const TensorContainer &) const = default;

private:
  std::vector<Tensor> entries_;
};

std::vector<std::byte> encode_container(const TensorContainer &c);
TensorContainer decode_container(std::span<const std::byte> bytes);

TensorContainer read_container(const std::filesystem::path &path);

/// Writes through a temporary sibling file and renames it into place, so a
/// failed write never leaves a truncated container at `path`.
void write_container(const TensorContainer &c, const std::filesystem::path &path);

} // namespace pbq
