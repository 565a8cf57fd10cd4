#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ntljb {

// Incremental SHA-256 (FIPS 180-4). Used for parameter-integrity digests,
// config digests, and data-cache content digests.
class Sha256 {
 public:
  Sha256() { reset(); }

  void reset();
  void update(const void* data, std::size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }

  // Finalizes and returns the 32-byte digest; the object must be reset
  // before further use.
  std::vector<std::uint8_t> finish();
  std::string finish_hex();

  static std::string hex(const void* data, std::size_t len);
  static std::string hex(const std::string& s) { return hex(s.data(), s.size()); }

 private:
  void process_block(const std::uint8_t* p);

  std::uint32_t h_[8];
  std::uint8_t buf_[64];
  std::size_t buf_len_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace ntljb
