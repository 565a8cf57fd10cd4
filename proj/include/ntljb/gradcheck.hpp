#pragma once

#include <cstdint>
#include <functional>

#include "ntljb/tensor.hpp"

// Central-finite-difference gradient checking. The loss closure re-runs the
// full forward pass against the current parameter values; values are
// perturbed in place one element at a time.

namespace ntljb {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  std::int64_t checked = 0;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// rel err per element = |a - f| / max(|a|, |f|, floor). The floor absorbs
// float32 forward-pass noise on near-zero gradients; h is the half step.
GradCheckReport check_gradient(const std::function<double()>& loss,
                               float* values, const float* analytic,
                               std::int64_t n, double h, double floor);

}  // namespace ntljb
