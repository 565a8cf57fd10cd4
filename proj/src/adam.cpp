#include "ntljb/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "ntljb/parallel.hpp"

namespace ntljb {

Adam::Adam(std::vector<Param*> params, const AdamConfig& cfg)
    : cfg_(cfg), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double lr = cfg_.lr, b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.eps;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    float* p = params_[k]->value.data();
    const float* g = params_[k]->grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    par::for_n(params_[k]->value.numel(), [=](std::int64_t i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p[i] = static_cast<float>(p[i] -
                                lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    });
  }
}

void Adam::zero_grads() {
  for (Param* p : params_) p->grad.zero();
}

void Adam::restore(std::vector<Tensor> m, std::vector<Tensor> v,
                   std::int64_t t) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw std::invalid_argument("Adam::restore: slot count mismatch");
  for (std::size_t k = 0; k < params_.size(); ++k)
    if (!m[k].same_shape(params_[k]->value) ||
        !v[k].same_shape(params_[k]->value))
      throw std::invalid_argument("Adam::restore: moment shape mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace ntljb
