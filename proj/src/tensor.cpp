#include "ntljb/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ntljb/parallel.hpp"

namespace ntljb {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 4)
    throw std::invalid_argument("Tensor: rank must be 1..4");
  std::int64_t n = 1;
  for (int d : shape_) {
    if (d <= 0) throw std::invalid_argument("Tensor: dims must be positive");
    n *= d;
  }
  v_.assign(static_cast<std::size_t>(n), 0.0f);
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

void Tensor::fill(float value) {
  for (auto& x : v_) x = value;
}

bool Tensor::all_finite() const {
  for (float x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

bool Tensor::bitwise_equal(const Tensor& o) const {
  if (shape_ != o.shape_) return false;
  return v_.empty() ||
         std::memcmp(v_.data(), o.v_.data(), v_.size() * sizeof(float)) == 0;
}

void Tensor::add_scaled(const Tensor& other, float alpha) {
  if (!same_shape(other))
    throw std::invalid_argument("add_scaled: shape mismatch " + shape_str() +
                                " vs " + other.shape_str());
  const float* src = other.data();
  float* dst = v_.data();
  par::for_n(numel(), [=](std::int64_t i) { dst[i] += alpha * src[i]; });
}

void Tensor::scale(float alpha) {
  float* dst = v_.data();
  par::for_n(numel(), [=](std::int64_t i) { dst[i] *= alpha; });
}

float Tensor::min_value() const {
  float m = v_.empty() ? 0.0f : v_[0];
  for (float x : v_) m = std::min(m, x);
  return m;
}

float Tensor::max_value() const {
  float m = v_.empty() ? 0.0f : v_[0];
  for (float x : v_) m = std::max(m, x);
  return m;
}

std::string Tensor::shape_str() const {
  std::string s = "{";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "}";
}

}  // namespace ntljb
