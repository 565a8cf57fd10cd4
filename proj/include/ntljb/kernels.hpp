#pragma once

// Hot compute kernels behind the network layers. Each kernel has a serial
// reference implementation and an OpenMP implementation; ntljb::kern::*
// dispatches on par::mode(). The two implementations accumulate every output
// element in the same order (conv: ic -> kh -> kw per output; params:
// n -> oh -> ow per weight; norm: per-row double sums), so with contraction
// disabled their results are bitwise identical. Tests and the benchmark tool
// call the serial:: / omp:: entry points directly.

namespace ntljb::kern {

struct ConvShape {
  int n = 0, c_in = 0, h_in = 0, w_in = 0;
  int c_out = 0, kernel = 0, stride = 1, pad = 0;

  int h_out() const { return (h_in + 2 * pad - kernel) / stride + 1; }
  int w_out() const { return (w_in + 2 * pad - kernel) / stride + 1; }
  bool valid() const {
    return n > 0 && c_in > 0 && h_in > 0 && w_in > 0 && c_out > 0 &&
           kernel > 0 && stride > 0 && pad >= 0 &&
           h_in + 2 * pad >= kernel && w_in + 2 * pad >= kernel;
  }
};

// x {n,c_in,h,w}, w {c_out,c_in,k,k}, bias {c_out} or null, y {n,c_out,h',w'}.
// backward_input overwrites gx; backward_params accumulates into gw/gb.
// instance normalization works on rows = n*c independent (h*w)-vectors and
// also returns the per-row mean and 1/sqrt(var+eps) needed for backward.

namespace serial {
void conv2d_forward(const ConvShape& s, const float* x, const float* w,
                    const float* bias, float* y);
void conv2d_backward_input(const ConvShape& s, const float* gy, const float* w,
                           float* gx);
void conv2d_backward_params(const ConvShape& s, const float* x,
                            const float* gy, float* gw, float* gb);
void instance_norm_forward(int rows, int hw, const float* x, float* y,
                           float* mean, float* inv_std, float eps);
void instance_norm_backward(int rows, int hw, const float* x,
                            const float* mean, const float* inv_std,
                            const float* gy, float* gx);
}  // namespace serial

namespace omp {
void conv2d_forward(const ConvShape& s, const float* x, const float* w,
                    const float* bias, float* y);
void conv2d_backward_input(const ConvShape& s, const float* gy, const float* w,
                           float* gx);
void conv2d_backward_params(const ConvShape& s, const float* x,
                            const float* gy, float* gw, float* gb);
void instance_norm_forward(int rows, int hw, const float* x, float* y,
                           float* mean, float* inv_std, float eps);
void instance_norm_backward(int rows, int hw, const float* x,
                            const float* mean, const float* inv_std,
                            const float* gy, float* gx);
}  // namespace omp

void conv2d_forward(const ConvShape& s, const float* x, const float* w,
                    const float* bias, float* y);
void conv2d_backward_input(const ConvShape& s, const float* gy, const float* w,
                           float* gx);
void conv2d_backward_params(const ConvShape& s, const float* x,
                            const float* gy, float* gw, float* gb);
void instance_norm_forward(int rows, int hw, const float* x, float* y,
                           float* mean, float* inv_std, float eps);
void instance_norm_backward(int rows, int hw, const float* x,
                            const float* mean, const float* inv_std,
                            const float* gy, float* gx);

}  // namespace ntljb::kern
