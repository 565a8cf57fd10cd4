#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ntljb {

// Dense row-major float32 tensor, rank 1..4. Shapes in this codebase:
// images {n, c, h, w}, logits/features {n, d}, conv weights {oc, ic, k, k},
// vectors {n}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float value);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  float* data() { return v_.data(); }
  const float* data() const { return v_.data(); }
  float& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

  // {n,c,h,w} indexing; bounds unchecked.
  float& at(int n, int c, int h, int w) {
    return v_[static_cast<std::size_t>(offset(n, c, h, w))];
  }
  float at(int n, int c, int h, int w) const {
    return v_[static_cast<std::size_t>(offset(n, c, h, w))];
  }

  void fill(float value);
  void zero() { fill(0.0f); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  bool bitwise_equal(const Tensor& o) const;

  // this += alpha * other; shapes must match.
  void add_scaled(const Tensor& other, float alpha);
  void scale(float alpha);

  float min_value() const;
  float max_value() const;

  std::string shape_str() const;

 private:
  std::int64_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }

  std::vector<int> shape_;
  std::vector<float> v_;
};

}  // namespace ntljb
