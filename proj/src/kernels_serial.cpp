#include <cmath>
#include <cstdint>

#include "ntljb/kernels.hpp"

// Reference implementations: textbook loops, one scalar accumulator per
// output element. Kept deliberately simple; correctness baseline for the
// OpenMP versions and for the finite-difference gradient checks.

namespace ntljb::kern::serial {

void conv2d_forward(const ConvShape& s, const float* x, const float* w,
                    const float* bias, float* y) {
  const int ho = s.h_out(), wo = s.w_out();
  std::int64_t yi = 0;
  for (int n = 0; n < s.n; ++n)
    for (int oc = 0; oc < s.c_out; ++oc)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          float acc = bias ? bias[oc] : 0.0f;
          for (int ic = 0; ic < s.c_in; ++ic)
            for (int kh = 0; kh < s.kernel; ++kh) {
              const int ih = oh * s.stride - s.pad + kh;
              if (ih < 0 || ih >= s.h_in) continue;
              for (int kw = 0; kw < s.kernel; ++kw) {
                const int iw = ow * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.w_in) continue;
                const std::int64_t xi =
                    ((static_cast<std::int64_t>(n) * s.c_in + ic) * s.h_in +
                     ih) *
                        s.w_in +
                    iw;
                const std::int64_t wi =
                    ((static_cast<std::int64_t>(oc) * s.c_in + ic) * s.kernel +
                     kh) *
                        s.kernel +
                    kw;
                acc += w[wi] * x[xi];
              }
            }
          y[yi++] = acc;
        }
}

void conv2d_backward_input(const ConvShape& s, const float* gy, const float* w,
                           float* gx) {
  const int ho = s.h_out(), wo = s.w_out();
  std::int64_t gi = 0;
  for (int n = 0; n < s.n; ++n)
    for (int ic = 0; ic < s.c_in; ++ic)
      for (int ih = 0; ih < s.h_in; ++ih)
        for (int iw = 0; iw < s.w_in; ++iw) {
          float acc = 0.0f;
          for (int oc = 0; oc < s.c_out; ++oc)
            for (int kh = 0; kh < s.kernel; ++kh) {
              const int oh_num = ih + s.pad - kh;
              if (oh_num < 0 || oh_num % s.stride != 0) continue;
              const int oh = oh_num / s.stride;
              if (oh >= ho) continue;
              for (int kw = 0; kw < s.kernel; ++kw) {
                const int ow_num = iw + s.pad - kw;
                if (ow_num < 0 || ow_num % s.stride != 0) continue;
                const int ow = ow_num / s.stride;
                if (ow >= wo) continue;
                const std::int64_t yi =
                    ((static_cast<std::int64_t>(n) * s.c_out + oc) * ho + oh) *
                        wo +
                    ow;
                const std::int64_t wi =
                    ((static_cast<std::int64_t>(oc) * s.c_in + ic) * s.kernel +
                     kh) *
                        s.kernel +
                    kw;
                acc += w[wi] * gy[yi];
              }
            }
          gx[gi++] = acc;
        }
}

void conv2d_backward_params(const ConvShape& s, const float* x,
                            const float* gy, float* gw, float* gb) {
  const int ho = s.h_out(), wo = s.w_out();
  for (int oc = 0; oc < s.c_out; ++oc)
    for (int ic = 0; ic < s.c_in; ++ic)
      for (int kh = 0; kh < s.kernel; ++kh)
        for (int kw = 0; kw < s.kernel; ++kw) {
          float acc = 0.0f;
          for (int n = 0; n < s.n; ++n)
            for (int oh = 0; oh < ho; ++oh) {
              const int ih = oh * s.stride - s.pad + kh;
              if (ih < 0 || ih >= s.h_in) continue;
              for (int ow = 0; ow < wo; ++ow) {
                const int iw = ow * s.stride - s.pad + kw;
                if (iw < 0 || iw >= s.w_in) continue;
                const std::int64_t yi =
                    ((static_cast<std::int64_t>(n) * s.c_out + oc) * ho + oh) *
                        wo +
                    ow;
                const std::int64_t xi =
                    ((static_cast<std::int64_t>(n) * s.c_in + ic) * s.h_in +
                     ih) *
                        s.w_in +
                    iw;
                acc += gy[yi] * x[xi];
              }
            }
          const std::int64_t wi =
              ((static_cast<std::int64_t>(oc) * s.c_in + ic) * s.kernel + kh) *
                  s.kernel +
              kw;
          gw[wi] += acc;
        }
  if (gb) {
    for (int oc = 0; oc < s.c_out; ++oc) {
      float acc = 0.0f;
      for (int n = 0; n < s.n; ++n)
        for (int oh = 0; oh < ho; ++oh)
          for (int ow = 0; ow < wo; ++ow) {
            const std::int64_t yi =
                ((static_cast<std::int64_t>(n) * s.c_out + oc) * ho + oh) * wo +
                ow;
            acc += gy[yi];
          }
      gb[oc] += acc;
    }
  }
}

void instance_norm_forward(int rows, int hw, const float* x, float* y,
                           float* mean, float* inv_std, float eps) {
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
  for (int r = 0; r < rows; ++r) {
    const float* xr = x + static_cast<std::int64_t>(r) * hw;
    const float* gr = gy + static_cast<std::int64_t>(r) * hw;
    float* or_ = gx + static_cast<std::int64_t>(r) * hw;
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
      or_[i] = is * (gr[i] - mg - xhat * mgx);
    }
  }
}

}  // namespace ntljb::kern::serial
