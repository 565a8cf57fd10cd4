#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ntljb/kernels.hpp"
#include "ntljb/rng.hpp"
#include "ntljb/tensor.hpp"

// Times each kernel's serial reference against its OpenMP twin on a few
// network-realistic shapes and checks that their outputs stay bitwise
// identical. On a single hardware core the speedup column hovering around
// 1.0 (or below, from scheduling overhead) is the expected honest result.

namespace {

using namespace ntljb;
using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm caches and page in buffers
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.normal());
  return t;
}

struct Row {
  std::string name;
  double serial_ms = 0.0;
  double omp_ms = 0.0;
  bool bitwise = false;
};

void print_rows(const std::vector<Row>& rows) {
  std::printf("%-34s %12s %12s %9s %9s\n", "kernel", "serial ms", "omp ms",
              "speedup", "bitwise");
  for (const Row& r : rows)
    std::printf("%-34s %12.3f %12.3f %8.2fx %9s\n", r.name.c_str(),
                r.serial_ms, r.omp_ms, r.serial_ms / r.omp_ms,
                r.bitwise ? "yes" : "NO");
}

}  // namespace

int main() {
  std::printf("omp max threads: %d\n\n", omp_get_max_threads());
  Rng rng(7);
  std::vector<Row> rows;

  const std::vector<std::pair<std::string, kern::ConvShape>> conv_shapes = {
      {"conv 16x3x32x32 -> 12 k3", {16, 3, 32, 32, 12, 3, 1, 1}},
      {"conv 16x12x32x32 -> 24 k3 s2", {16, 12, 32, 32, 24, 3, 2, 1}},
      {"conv 16x24x16x16 -> 48 k3 s2", {16, 24, 16, 16, 48, 3, 2, 1}},
      {"conv 8x12x32x32 -> 12 k7", {8, 12, 32, 32, 12, 7, 1, 3}},
  };
  const int reps = 20;

  for (const auto& [label, s] : conv_shapes) {
    const Tensor x = random_tensor({s.n, s.c_in, s.h_in, s.w_in}, rng);
    const Tensor w = random_tensor({s.c_out, s.c_in, s.kernel, s.kernel}, rng);
    const Tensor b = random_tensor({s.c_out}, rng);
    Tensor ys({s.n, s.c_out, s.h_out(), s.w_out()});
    Tensor yo(ys.shape());

    Row fwd{label + " fwd"};
    fwd.serial_ms = time_ms(
        [&] {
          kern::serial::conv2d_forward(s, x.data(), w.data(), b.data(),
                                       ys.data());
        },
        reps);
    fwd.omp_ms = time_ms(
        [&] {
          kern::omp::conv2d_forward(s, x.data(), w.data(), b.data(),
                                    yo.data());
        },
        reps);
    fwd.bitwise = ys.bitwise_equal(yo);
    rows.push_back(fwd);

    const Tensor gy = random_tensor(ys.shape(), rng);
    Tensor gxs(x.shape()), gxo(x.shape());
    Row bwd{label + " bwd-in"};
    bwd.serial_ms = time_ms(
        [&] {
          kern::serial::conv2d_backward_input(s, gy.data(), w.data(),
                                              gxs.data());
        },
        reps);
    bwd.omp_ms = time_ms(
        [&] {
          kern::omp::conv2d_backward_input(s, gy.data(), w.data(), gxo.data());
        },
        reps);
    bwd.bitwise = gxs.bitwise_equal(gxo);
    rows.push_back(bwd);

    Tensor gws(w.shape()), gwo(w.shape()), gbs(b.shape()), gbo(b.shape());
    Row bwp{label + " bwd-par"};
    bwp.serial_ms = time_ms(
        [&] {
          gws.zero();
          gbs.zero();
          kern::serial::conv2d_backward_params(s, x.data(), gy.data(),
                                               gws.data(), gbs.data());
        },
        reps);
    bwp.omp_ms = time_ms(
        [&] {
          gwo.zero();
          gbo.zero();
          kern::omp::conv2d_backward_params(s, x.data(), gy.data(), gwo.data(),
                                            gbo.data());
        },
        reps);
    bwp.bitwise = gws.bitwise_equal(gwo) && gbs.bitwise_equal(gbo);
    rows.push_back(bwp);
  }

  {
    const int rows_n = 16 * 24, hw = 16 * 16;
    const Tensor x = random_tensor({rows_n, hw}, rng);
    Tensor ys(x.shape()), yo(x.shape());
    Tensor ms({rows_n}), mo({rows_n}), is({rows_n}), io({rows_n});
    Row fwd{"instance_norm 384x256 fwd"};
    fwd.serial_ms = time_ms(
        [&] {
          kern::serial::instance_norm_forward(rows_n, hw, x.data(), ys.data(),
                                              ms.data(), is.data(), 1e-5f);
        },
        reps);
    fwd.omp_ms = time_ms(
        [&] {
          kern::omp::instance_norm_forward(rows_n, hw, x.data(), yo.data(),
                                           mo.data(), io.data(), 1e-5f);
        },
        reps);
    fwd.bitwise = ys.bitwise_equal(yo) && ms.bitwise_equal(mo) &&
                  is.bitwise_equal(io);
    rows.push_back(fwd);

    const Tensor gy = random_tensor(x.shape(), rng);
    Tensor gxs(x.shape()), gxo(x.shape());
    Row bwd{"instance_norm 384x256 bwd"};
    bwd.serial_ms = time_ms(
        [&] {
          kern::serial::instance_norm_backward(rows_n, hw, x.data(), ms.data(),
                                               is.data(), gy.data(),
                                               gxs.data());
        },
        reps);
    bwd.omp_ms = time_ms(
        [&] {
          kern::omp::instance_norm_backward(rows_n, hw, x.data(), mo.data(),
                                            io.data(), gy.data(), gxo.data());
        },
        reps);
    bwd.bitwise = gxs.bitwise_equal(gxo);
    rows.push_back(bwd);
  }

  print_rows(rows);

  bool all_bitwise = true;
  for (const Row& r : rows) all_bitwise = all_bitwise && r.bitwise;
  if (!all_bitwise) {
    std::printf("\nBITWISE MISMATCH between serial and omp kernels\n");
    return 1;
  }
  return 0;
}
