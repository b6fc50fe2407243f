#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "scgen/tensor.hpp"

namespace scgen {

// SCGT binary tensor record:
//   magic 'S' 'C' 'G' 'T', u8 version (1), u8 dtype (0 = f32, 1 = f64),
//   u32 ndim, ndim x u64 dims, little-endian payload.
// Rank mapping onto Shape: 1 -> 1xLx1x1, 2 -> AxBx1x1, 3 -> 1xAxBxC, 4 -> as is.
inline constexpr std::uint8_t kScgtVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

// Sequential little-endian decoder over a byte buffer. Every failure reports
// the byte offset at which decoding stopped.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes, std::string source = "<memory>")
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t count);

  [[noreturn]] void fail(const std::string& message) const;

 private:
  void need(std::size_t count);

  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const std::string& s);

  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

template <class T>
void write_scgt(ByteWriter& out, const Tensor<T>& t, int ndim = 4);

// Decodes one record, converting the stored dtype to T.
template <class T>
Tensor<T> read_scgt(ByteReader& in);

template <class T>
void save_tensor(const std::string& path, const Tensor<T>& t, int ndim = 4);
template <class T>
Tensor<T> load_tensor(const std::string& path);

std::vector<char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<char>& bytes);

}  // namespace scgen
