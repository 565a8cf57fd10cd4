#include "ntljb/kernels.hpp"

#include "ntljb/parallel.hpp"

namespace ntljb::kern {

void conv2d_forward(const ConvShape& s, const float* x, const float* w,
                    const float* bias, float* y) {
  if (par::mode() == par::Mode::serial)
    serial::conv2d_forward(s, x, w, bias, y);
  else
    omp::conv2d_forward(s, x, w, bias, y);
}

void conv2d_backward_input(const ConvShape& s, const float* gy, const float* w,
                           float* gx) {
  if (par::mode() == par::Mode::serial)
    serial::conv2d_backward_input(s, gy, w, gx);
  else
    omp::conv2d_backward_input(s, gy, w, gx);
}

void conv2d_backward_params(const ConvShape& s, const float* x,
                            const float* gy, float* gw, float* gb) {
  if (par::mode() == par::Mode::serial)
    serial::conv2d_backward_params(s, x, gy, gw, gb);
  else
    omp::conv2d_backward_params(s, x, gy, gw, gb);
}

void instance_norm_forward(int rows, int hw, const float* x, float* y,
                           float* mean, float* inv_std, float eps) {
  if (par::mode() == par::Mode::serial)
    serial::instance_norm_forward(rows, hw, x, y, mean, inv_std, eps);
  else
    omp::instance_norm_forward(rows, hw, x, y, mean, inv_std, eps);
}

void instance_norm_backward(int rows, int hw, const float* x,
                            const float* mean, const float* inv_std,
                            const float* gy, float* gx) {
  if (par::mode() == par::Mode::serial)
    serial::instance_norm_backward(rows, hw, x, mean, inv_std, gy, gx);
  else
    omp::instance_norm_backward(rows, hw, x, mean, inv_std, gy, gx);
}

}  // namespace ntljb::kern
