#pragma once

#include <cstdint>
#include <vector>

#include "ntljb/layers.hpp"

namespace ntljb {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Holds raw Param pointers; the owning
// nets keep layers behind unique_ptr, so the pointers survive moves of the
// enclosing model structs.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param*> params, const AdamConfig& cfg);

  void step();
  void zero_grads();
  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Checkpoint access: moment tensors in parameter order plus step counter.
  int slots() const { return static_cast<int>(params_.size()); }
  const Tensor& m(int i) const { return m_[static_cast<std::size_t>(i)]; }
  const Tensor& v(int i) const { return v_[static_cast<std::size_t>(i)]; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::int64_t t);

 private:
  AdamConfig cfg_;
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace ntljb
