#include "ntljb/bytes.hpp"

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ntljb {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void ByteWriter::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

void ByteWriter::bytes(const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::str(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void ByteWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) u32(static_cast<std::uint32_t>(t.dim(i)));
  for (std::int64_t i = 0; i < t.numel(); ++i) f32(t[i]);
}

void ByteWriter::write_file(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf_.data()),
          static_cast<std::streamsize>(buf_.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

ByteReader ByteReader::from_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  return ByteReader(std::move(data));
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > buf_.size())
    throw std::runtime_error("truncated binary payload");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return buf_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(buf_[pos_++]) << (8 * i);
  return v;
}

float ByteReader::f32() {
  const std::uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double ByteReader::f64() {
  const std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void ByteReader::bytes(void* p, std::size_t n) {
  need(n);
  std::memcpy(p, buf_.data() + pos_, n);
  pos_ += n;
}

std::string ByteReader::str() {
  const std::uint64_t n = u64();
  if (n > remaining()) throw std::runtime_error("truncated string payload");
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_),
                static_cast<std::size_t>(n));
  pos_ += static_cast<std::size_t>(n);
  return s;
}

Tensor ByteReader::tensor() {
  const std::uint32_t rank = u32();
  if (rank == 0 || rank > 4) throw std::runtime_error("bad tensor rank");
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = u32();
    if (d == 0 || d > (1u << 24)) throw std::runtime_error("bad tensor dim");
    shape.push_back(static_cast<int>(d));
  }
  Tensor t(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = f32();
  return t;
}

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

bool file_exists(const std::string& path) {
  return std::filesystem::exists(path);
}

void ensure_dir(const std::string& path) {
  std::filesystem::create_directories(path);
}

}  // namespace ntljb
