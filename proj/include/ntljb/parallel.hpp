#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

// Execution-mode switch shared by every kernel in the library. The OpenMP
// implementations are written so that each output element is produced by one
// thread using the same accumulation order as the serial reference, which
// keeps the two modes bitwise identical.

namespace ntljb::par {

enum class Mode { serial, openmp };

Mode mode() noexcept;
void set_mode(Mode m) noexcept;
const char* mode_name(Mode m) noexcept;

// Runs body(i) for i in [0, n). In openmp mode iterations are distributed
// statically; bodies must write disjoint outputs.
template <class F>
void for_n(std::int64_t n, F&& body) {
  if (mode() == Mode::openmp) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) body(i);
  }
}

// Deterministic reduction: fixed-size blocks summed serially, partials
// combined in block order. Identical result in both modes.
template <class F>
double sum_n(std::int64_t n, F&& term) {
  constexpr std::int64_t kBlock = 4096;
  if (n <= 0) return 0.0;
  const std::int64_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
  for_n(blocks, [&](std::int64_t b) {
    const std::int64_t lo = b * kBlock;
    const std::int64_t hi = std::min(n, lo + kBlock);
    double s = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(b)] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace ntljb::par
