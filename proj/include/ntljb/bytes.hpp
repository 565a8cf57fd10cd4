#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntljb/tensor.hpp"

// Little-endian binary encoding plus small file helpers. All on-disk
// artifacts (caches, checkpoints) go through these so the byte layout is
// identical across platforms, and digests over the encoded bytes are stable.

namespace ntljb {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v);
  void f64(double v);
  void bytes(const void* p, std::size_t n);
  void str(const std::string& s);  // u64 length prefix + raw bytes
  void tensor(const Tensor& t);    // rank, dims, f32 payload

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  void write_file(const std::string& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}
  static ByteReader from_file(const std::string& path);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32();
  double f64();
  void bytes(void* p, std::size_t n);
  std::string str();
  Tensor tensor();

  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

// Shortest-round-trip decimal text for doubles ("%.17g" fallback free):
// deterministic, locale-independent. Used by every CSV/JSON emitter.
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

}  // namespace ntljb
