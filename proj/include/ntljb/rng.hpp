#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

// All randomness flows through this wrapper. std::mt19937_64 output is
// pinned by the standard, and the distributions here are hand-rolled, so a
// seed reproduces the same stream on any platform (libstdc++'s distribution
// objects carry no such guarantee).

namespace ntljb {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n), rejection-sampled so every value is equally likely.
  std::int64_t uniform_int(std::int64_t n);

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      const std::int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

  std::vector<int> permutation(int n);

  // Derives an independent stream seed from (seed, name): FNV-1a over the
  // name folded into the seed through splitmix64 finalizers. Consumers that
  // draw from separate named streams cannot shift each other's sequences.
  static std::uint64_t derive(std::uint64_t seed, std::string_view stream);
  static std::uint64_t derive(std::uint64_t seed, std::string_view stream,
                              std::uint64_t index);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ntljb
