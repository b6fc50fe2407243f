#include "scgen/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace scgen {

namespace {

template <class U>
U from_le(const char* p) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(U));
  }
  return v;
}

template <class U>
void to_le(std::vector<char>& buf, U v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(U));
  }
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(U));
}

}  // namespace

void ByteReader::fail(const std::string& message) const {
  std::ostringstream os;
  os << source_ << ": " << message << " at byte offset " << pos_;
  throw FormatError(os.str());
}

void ByteReader::need(std::size_t count) {
  if (remaining() < count) {
    fail("truncated data (need " + std::to_string(count) + " bytes, have " + std::to_string(remaining()) + ")");
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(bytes_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  need(4);
  auto v = from_le<std::uint32_t>(bytes_.data() + pos_);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  auto v = from_le<std::uint64_t>(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}

float ByteReader::f32() {
  need(4);
  auto v = from_le<float>(bytes_.data() + pos_);
  pos_ += 4;
  return v;
}

double ByteReader::f64() {
  need(8);
  auto v = from_le<double>(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}

std::string ByteReader::bytes(std::size_t count) {
  need(count);
  std::string s(bytes_.data() + pos_, count);
  pos_ += count;
  return s;
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
void ByteWriter::u32(std::uint32_t v) { to_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { to_le(buf_, v); }
void ByteWriter::f32(float v) { to_le(buf_, v); }
void ByteWriter::f64(double v) { to_le(buf_, v); }
void ByteWriter::bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

template <class T>
void write_scgt(ByteWriter& out, const Tensor<T>& t, int ndim) {
  const Shape& s = t.shape();
  std::vector<std::uint64_t> dims;
  switch (ndim) {
    case 1:
      if (s.n != 1 || s.h != 1 || s.w != 1) throw ShapeError("rank-1 SCGT requires 1xLx1x1, got " + s.str());
      dims = {static_cast<std::uint64_t>(s.c)};
      break;
    case 2:
      if (s.h != 1 || s.w != 1) throw ShapeError("rank-2 SCGT requires AxBx1x1, got " + s.str());
      dims = {static_cast<std::uint64_t>(s.n), static_cast<std::uint64_t>(s.c)};
      break;
    case 3:
      if (s.n != 1) throw ShapeError("rank-3 SCGT requires leading 1, got " + s.str());
      dims = {static_cast<std::uint64_t>(s.c), static_cast<std::uint64_t>(s.h), static_cast<std::uint64_t>(s.w)};
      break;
    case 4:
      dims = {static_cast<std::uint64_t>(s.n), static_cast<std::uint64_t>(s.c), static_cast<std::uint64_t>(s.h),
              static_cast<std::uint64_t>(s.w)};
      break;
    default:
      throw ParameterError("SCGT rank must be 1..4, got " + std::to_string(ndim));
  }
  out.bytes("SCGT");
  out.u8(kScgtVersion);
  out.u8(static_cast<std::uint8_t>(std::is_same_v<T, double> ? DType::f64 : DType::f32));
  out.u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) out.u64(d);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    if constexpr (std::is_same_v<T, double>) {
      out.f64(t[i]);
    } else {
      out.f32(t[i]);
    }
  }
}

template <class T>
Tensor<T> read_scgt(ByteReader& in) {
  const std::size_t start = in.offset();
  const std::string magic = in.bytes(4);
  if (magic != "SCGT") {
    std::ostringstream os;
    os << "bad SCGT magic in record starting at offset " << start;
    in.fail(os.str());
  }
  const auto version = in.u8();
  if (version != kScgtVersion) in.fail("unsupported SCGT version " + std::to_string(version));
  const auto dtype = in.u8();
  if (dtype > 1) in.fail("unknown SCGT dtype " + std::to_string(dtype));
  const auto ndim = in.u32();
  if (ndim < 1 || ndim > 4) in.fail("unsupported SCGT rank " + std::to_string(ndim));
  std::vector<std::int64_t> dims(ndim);
  std::uint64_t total = 1;
  for (auto& d : dims) {
    const auto v = in.u64();
    if (v > (1ull << 40)) in.fail("implausible SCGT extent " + std::to_string(v));
    d = static_cast<std::int64_t>(v);
    total *= v;
  }
  Shape shape;
  switch (ndim) {
    case 1: shape = {1, dims[0], 1, 1}; break;
    case 2: shape = {dims[0], dims[1], 1, 1}; break;
    case 3: shape = {1, dims[0], dims[1], dims[2]}; break;
    default: shape = {dims[0], dims[1], dims[2], dims[3]}; break;
  }
  const std::size_t elem = dtype == 0 ? 4 : 8;
  if (in.remaining() < total * elem) in.fail("truncated SCGT payload");
  Tensor<T> t(shape);
  for (std::uint64_t i = 0; i < total; ++i) {
    t[static_cast<std::int64_t>(i)] = dtype == 0 ? static_cast<T>(in.f32()) : static_cast<T>(in.f64());
  }
  return t;
}

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

template <class T>
void save_tensor(const std::string& path, const Tensor<T>& t, int ndim) {
  ByteWriter w;
  write_scgt(w, t, ndim);
  write_file_bytes(path, w.buffer());
}

template <class T>
Tensor<T> load_tensor(const std::string& path) {
  ByteReader r(read_file_bytes(path), path);
  auto t = read_scgt<T>(r);
  if (!r.at_end()) r.fail("trailing bytes after SCGT record");
  return t;
}

template void write_scgt(ByteWriter&, const Tensor<float>&, int);
template void write_scgt(ByteWriter&, const Tensor<double>&, int);
template Tensor<float> read_scgt(ByteReader&);
template Tensor<double> read_scgt(ByteReader&);
template void save_tensor(const std::string&, const Tensor<float>&, int);
template void save_tensor(const std::string&, const Tensor<double>&, int);
template Tensor<float> load_tensor(const std::string&);
template Tensor<double> load_tensor(const std::string&);

}  // namespace scgen
