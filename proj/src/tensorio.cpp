#include "pbq/tensorio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "pbq/error.hpp"

namespace pbq {
namespace {

constexpr char kMagic[4] = {'P', 'B', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "PBTC encoding assumes a little-endian host");

class Writer {
public:
  template <typename T> void put(T v) {
    const auto *p = reinterpret_cast<const std::byte *>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::span<const std::byte> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void pad_to(std::size_t multiple) {
    while (out_.size() % multiple != 0) out_.push_back(std::byte{0});
  }
  std::vector<std::byte> take() { return std::move(out_); }

private:
  std::vector<std::byte> out_;
};

class Reader {
public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  template <typename T> T get(const char *what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::byte> get_bytes(std::uint64_t n, const char *what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::uint64_t n, const char *what) { get_bytes(n, what); }
  std::uint64_t pos() const { return pos_; }

private:
  void need(std::uint64_t n, const char *what) const {
    if (n > in_.size() - pos_)
      throw FormatError(std::string("truncated ") + what, pos_);
  }

  std::span<const std::byte> in_;
  std::uint64_t pos_ = 0;
};

void check_payload(const Tensor &t) {
  const std::uint64_t expect = t.element_count() * dtype_size(t.dtype);
  if (t.payload.size() != expect) {
    throw InvalidArgument("tensor '" + t.name + "': payload length " +
                          std::to_string(t.payload.size()) + " != " + std::to_string(expect));
  }
}

template <typename T> std::vector<std::byte> to_bytes(std::span<const T> v) {
  std::vector<std::byte> out(v.size_bytes());
  if (!v.empty()) std::memcpy(out.data(), v.data(), v.size_bytes());
  return out;
}

template <typename T> std::vector<T> from_bytes(const std::vector<std::byte> &b) {
  std::vector<T> out(b.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), b.data(), out.size() * sizeof(T));
  return out;
}

} // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
  case DType::f64: return 8;
  case DType::f32: return 4;
  case DType::u8: return 1;
  case DType::u64: return 8;
  }
  throw InvalidArgument("unknown dtype code " + std::to_string(static_cast<int>(t)));
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor make_tensor(std::string name, const DenseMatrix &m, DType dtype) {
  return make_tensor(std::move(name), {m.rows(), m.cols()}, m.data(), dtype);
}

Tensor make_tensor(std::string name, std::vector<std::uint64_t> shape,
                   std::span<const double> values, DType dtype) {
  Tensor t{std::move(name), dtype, std::move(shape), {}};
  if (dtype == DType::f64) {
    t.payload = to_bytes(values);
  } else if (dtype == DType::f32) {
    std::vector<float> f(values.begin(), values.end());
    t.payload = to_bytes(std::span<const float>(f));
  } else {
    throw InvalidArgument("make_tensor: real values need an f64 or f32 dtype");
  }
  check_payload(t);
  return t;
}

Tensor make_tensor(std::string name, std::vector<std::uint64_t> shape,
                   std::span<const std::uint64_t> values) {
  Tensor t{std::move(name), DType::u64, std::move(shape), to_bytes(values)};
  check_payload(t);
  return t;
}

Tensor make_tensor(std::string name, std::vector<std::uint64_t> shape,
                   std::span<const std::uint8_t> values) {
  Tensor t{std::move(name), DType::u8, std::move(shape), to_bytes(values)};
  check_payload(t);
  return t;
}

std::vector<double> as_f64(const Tensor &t) {
  if (t.dtype == DType::f64) return from_bytes<double>(t.payload);
  if (t.dtype == DType::f32) {
    auto f = from_bytes<float>(t.payload);
    return {f.begin(), f.end()};
  }
  throw InvalidArgument("tensor '" + t.name + "' is not a float tensor");
}

std::vector<std::uint64_t> as_u64(const Tensor &t) {
  if (t.dtype != DType::u64) throw InvalidArgument("tensor '" + t.name + "' is not u64");
  return from_bytes<std::uint64_t>(t.payload);
}

std::vector<std::uint8_t> as_u8(const Tensor &t) {
  if (t.dtype != DType::u8) throw InvalidArgument("tensor '" + t.name + "' is not u8");
  return from_bytes<std::uint8_t>(t.payload);
}

DenseMatrix as_matrix(const Tensor &t) {
  if (t.shape.size() != 2)
    throw DimensionError("tensor '" + t.name + "' has rank " + std::to_string(t.shape.size()) +
                         ", expected 2");
  return DenseMatrix(t.shape[0], t.shape[1], as_f64(t));
}

void TensorContainer::add(Tensor t) {
  if (find(t.name) != nullptr)
    throw InvalidArgument("duplicate tensor name '" + t.name + "'");
  if (t.name.size() > 0xFFFF) throw InvalidArgument("tensor name longer than 65535 bytes");
  if (t.shape.size() > 0xFF) throw InvalidArgument("tensor rank above 255");
  check_payload(t);
  entries_.push_back(std::move(t));
}

const Tensor *TensorContainer::find(std::string_view name) const {
  for (const auto &t : entries_)
    if (t.name == name) return &t;
  return nullptr;
}

const Tensor &TensorContainer::at(std::string_view name) const {
  if (const Tensor *t = find(name)) return *t;
  throw InvalidArgument("missing tensor '" + std::string(name) + "'");
}

std::vector<std::byte> encode_container(const TensorContainer &c) {
  Writer w;
  w.put_bytes(std::as_bytes(std::span(kMagic)));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.size()));
  for (const auto &t : c.entries()) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_bytes(std::as_bytes(std::span(t.name.data(), t.name.size())));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(t.payload.size());
    w.put_bytes(t.payload);
    w.pad_to(8);
  }
  return w.take();
}

TensorContainer decode_container(std::span<const std::byte> bytes) {
  Reader r(bytes);
  auto magic = r.get_bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad magic", 0);
  const auto version_at = r.pos();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion)
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  const auto count = r.get<std::uint32_t>("tensor count");

  TensorContainer c;
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto entry_at = r.pos();
    Tensor t;
    const auto name_len = r.get<std::uint16_t>("name length");
    auto name = r.get_bytes(name_len, "name");
    t.name.assign(reinterpret_cast<const char *>(name.data()), name.size());
    if (!seen.insert(t.name).second)
      throw FormatError("duplicate tensor name '" + t.name + "'", entry_at);

    const auto dtype_at = r.pos();
    const auto code = r.get<std::uint8_t>("dtype");
    if (code > 3) throw FormatError("unknown dtype code " + std::to_string(code), dtype_at);
    t.dtype = static_cast<DType>(code);
    const auto ndim = r.get<std::uint8_t>("ndim");
    for (unsigned d = 0; d < ndim; ++d) t.shape.push_back(r.get<std::uint64_t>("dims"));

    const auto len_at = r.pos();
    const auto len = r.get<std::uint64_t>("payload length");
    // Overflow-safe shape check before trusting the length.
    std::uint64_t expect = dtype_size(t.dtype);
    bool overflow = false;
    for (auto d : t.shape) {
      if (d != 0 && expect > UINT64_MAX / d) overflow = true;
      expect *= d;
    }
    if (overflow || expect != len)
      throw FormatError("payload length " + std::to_string(len) + " disagrees with shape of '" +
                            t.name + "'",
                        len_at);
    auto payload = r.get_bytes(len, "payload");
    t.payload.assign(payload.begin(), payload.end());
    r.skip((8 - r.pos() % 8) % 8, "padding");
    c.add(std::move(t));
  }
  return c;
}

TensorContainer read_container(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(std::as_bytes(std::span(raw)));
}

void write_container(const TensorContainer &c, const std::filesystem::path &path) {
  const auto bytes = encode_container(c);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write to '" + tmp.string() + "' failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into '" + path.string() + "'");
  }
}

} // namespace pbq
