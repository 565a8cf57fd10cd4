#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "ntljb/kernels.hpp"

// OpenMP implementations. Parallelism is over independent output rows; per
// output element the accumulation order matches the serial reference
// (conv: bias, then ic -> kh -> kw; params: n -> oh -> ow; norm rows use the
// same double-precision row sums), so results are bitwise identical to
// kern::serial with -ffp-contract=off. Inner loops run over contiguous
// output positions so the compiler can vectorize the independent lanes.

namespace ntljb::kern::omp {

namespace {

// First ow with ow*stride - pad + k >= 0.
inline int ow_low(int pad, int k, int stride) {
  const int num = pad - k;
  return num <= 0 ? 0 : (num + stride - 1) / stride;
}

}  // namespace

void conv2d_forward(const ConvShape& s, const float* x, const float* w,
                    const float* bias, float* y) {
  const int ho = s.h_out(), wo = s.w_out();
  const std::int64_t rows = static_cast<std::int64_t>(s.n) * s.c_out * ho;
#pragma omp parallel for schedule(static)
  for (std::int64_t row = 0; row < rows; ++row) {
    const int oh = static_cast<int>(row % ho);
    const int oc = static_cast<int>((row / ho) % s.c_out);
    const int n = static_cast<int>(row / (static_cast<std::int64_t>(ho) * s.c_out));
    float* yrow = y + row * wo;
    const float b = bias ? bias[oc] : 0.0f;
    for (int ow = 0; ow < wo; ++ow) yrow[ow] = b;
    for (int ic = 0; ic < s.c_in; ++ic)
      for (int kh = 0; kh < s.kernel; ++kh) {
        const int ih = oh * s.stride - s.pad + kh;
        if (ih < 0 || ih >= s.h_in) continue;
        const float* xrow =
            x + ((static_cast<std::int64_t>(n) * s.c_in + ic) * s.h_in + ih) *
                    s.w_in;
        const float* wrow =
            w + ((static_cast<std::int64_t>(oc) * s.c_in + ic) * s.kernel + kh) *
                    s.kernel;
        for (int kw = 0; kw < s.kernel; ++kw) {
          if (s.w_in - 1 + s.pad - kw < 0) continue;
          const int lo = ow_low(s.pad, kw, s.stride);
          const int hi =
              std::min(wo - 1, (s.w_in - 1 + s.pad - kw) / s.stride);
          const float wv = wrow[kw];
          const int shift = kw - s.pad;
          for (int ow = lo; ow <= hi; ++ow)
            yrow[ow] += wv * xrow[ow * s.stride + shift];
        }
      }
  }
}

void conv2d_backward_input(const ConvShape& s, const float* gy, const float* w,
                           float* gx) {
  const int ho = s.h_out(), wo = s.w_out();
  const std::int64_t rows = static_cast<std::int64_t>(s.n) * s.c_in * s.h_in;
#pragma omp parallel for schedule(static)
  for (std::int64_t row = 0; row < rows; ++row) {
    const int ih = static_cast<int>(row % s.h_in);
    const int ic = static_cast<int>((row / s.h_in) % s.c_in);
    const int n =
        static_cast<int>(row / (static_cast<std::int64_t>(s.h_in) * s.c_in));
    float* gxrow = gx + row * s.w_in;
    std::memset(gxrow, 0, sizeof(float) * static_cast<std::size_t>(s.w_in));
    for (int oc = 0; oc < s.c_out; ++oc)
      for (int kh = 0; kh < s.kernel; ++kh) {
        const int oh_num = ih + s.pad - kh;
        if (oh_num < 0 || oh_num % s.stride != 0) continue;
        const int oh = oh_num / s.stride;
        if (oh >= ho) continue;
        const float* gyrow =
            gy + ((static_cast<std::int64_t>(n) * s.c_out + oc) * ho + oh) * wo;
        const float* wrow =
            w + ((static_cast<std::int64_t>(oc) * s.c_in + ic) * s.kernel + kh) *
                    s.kernel;
        for (int kw = 0; kw < s.kernel; ++kw) {
          if (s.w_in - 1 + s.pad - kw < 0) continue;
          const int lo = ow_low(s.pad, kw, s.stride);
          const int hi =
              std::min(wo - 1, (s.w_in - 1 + s.pad - kw) / s.stride);
          const float wv = wrow[kw];
          const int shift = kw - s.pad;
          for (int ow = lo; ow <= hi; ++ow)
            gxrow[ow * s.stride + shift] += wv * gyrow[ow];
        }
      }
  }
}

void conv2d_backward_params(const ConvShape& s, const float* x,
                            const float* gy, float* gw, float* gb) {
  const int ho = s.h_out(), wo = s.w_out();
  const std::int64_t pairs = static_cast<std::int64_t>(s.c_out) * s.c_in;
#pragma omp parallel for schedule(static)
  for (std::int64_t pair = 0; pair < pairs; ++pair) {
    const int ic = static_cast<int>(pair % s.c_in);
    const int oc = static_cast<int>(pair / s.c_in);
    for (int kh = 0; kh < s.kernel; ++kh)
      for (int kw = 0; kw < s.kernel; ++kw) {
        float acc = 0.0f;
        for (int n = 0; n < s.n; ++n)
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * s.stride - s.pad + kh;
            if (ih < 0 || ih >= s.h_in) continue;
            const float* gyrow =
                gy +
                ((static_cast<std::int64_t>(n) * s.c_out + oc) * ho + oh) * wo;
            const float* xrow =
                x +
                ((static_cast<std::int64_t>(n) * s.c_in + ic) * s.h_in + ih) *
                    s.w_in;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * s.stride - s.pad + kw;
              if (iw < 0 || iw >= s.w_in) continue;
              acc += gyrow[ow] * xrow[iw];
            }
          }
        gw[((static_cast<std::int64_t>(oc) * s.c_in + ic) * s.kernel + kh) *
               s.kernel +
           kw] += acc;
      }
  }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < s.c_out; ++oc) {
      float acc = 0.0f;
      for (int n = 0; n < s.n; ++n) {
        const float* gyrow =
            gy + (static_cast<std::int64_t>(n) * s.c_out + oc) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) acc += gyrow[i];
      }
      gb[oc] += acc;
    }
  }
}

void instance_norm_forward(int rows, int hw, const float* x, float* y,
                           float* mean, float* inv_std, float eps) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const float* xr = x + static_cast<std::int64_t>(r) * hw;
    float* yr = y + static_cast<std::int64_t>(r) * hw;
    double sum = 0.0;
    for (int i = 0; i < hw; ++i) sum += xr[i];
    const float mu = static_cast<float>(sum / hw);
    double var = 0.0;
    for (int i = 0; i < hw; ++i) {
      const double d = xr[i] - mu;
      var += d * d;
    }
    const float is =
        static_cast<float>(1.0 / std::sqrt(var / hw + static_cast<double>(eps)));
    mean[r] = mu;
    inv_std[r] = is;
    for (int i = 0; i < hw; ++i) yr[i] = (xr[i] - mu) * is;
  }
}

void instance_norm_backward(int rows, int hw, const float* x,
                            const float* mean, const float* inv_std,
                            const float* gy, float* gx) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const float* xr = x + static_cast<std::int64_t>(r) * hw;
    const float* gr = gy + static_cast<std::int64_t>(r) * hw;
    float* out = gx + static_cast<std::int64_t>(r) * hw;
    const float mu = mean[r], is = inv_std[r];
    double sg = 0.0, sgx = 0.0;
    for (int i = 0; i < hw; ++i) {
      const double xhat = (xr[i] - mu) * is;
      sg += gr[i];
      sgx += gr[i] * xhat;
    }
    const float mg = static_cast<float>(sg / hw);
    const float mgx = static_cast<float>(sgx / hw);
    for (int i = 0; i < hw; ++i) {
      const float xhat = (xr[i] - mu) * is;
      out[i] = is * (gr[i] - mg - xhat * mgx);
    }
  }
}

}  // namespace ntljb::kern::omp
