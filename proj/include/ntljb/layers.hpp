#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ntljb/rng.hpp"
#include "ntljb/tensor.hpp"

// Minimal trainable-layer stack. forward() records what backward() needs
// into a caller-owned LayerCache, so several forward passes through the same
// net can be alive at once (the disguising step backpropagates through four
// generator passes per update). backward() overwrites the returned input
// gradient and, when accumulate_params is set, accumulates parameter
// gradients into Param::grad.

namespace ntljb {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  explicit Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

struct LayerCache {
  Tensor input;
  Tensor output;
  Tensor mean;
  Tensor inv_std;
  std::vector<LayerCache> children;
};

using Tape = std::vector<LayerCache>;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual Tensor forward(const Tensor& x, LayerCache& cache) const = 0;
  virtual Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                          bool accumulate_params) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}

  Tensor infer(const Tensor& x) const {
    LayerCache scratch;
    return forward(x, scratch);
  }
};

enum class Init { he, gan, zero };

class Conv2d : public Layer {
 public:
  Conv2d(int c_in, int c_out, int kernel, int stride, int pad, Init init,
         Rng& rng, bool bias = true);
  const char* kind() const override { return "conv"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
  void collect_params(std::vector<Param*>& out) override;

  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }

 private:
  int c_in_, c_out_, kernel_, stride_, pad_;
  Param w_;
  std::unique_ptr<Param> b_;
};

class InstanceNorm : public Layer {
 public:
  explicit InstanceNorm(float eps = 1e-5f) : eps_(eps) {}
  const char* kind() const override { return "inorm"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;

 private:
  float eps_;
};

class ReLU : public Layer {
 public:
  const char* kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
  const char* kind() const override { return "lrelu"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;

 private:
  float slope_;
};

class Tanh : public Layer {
 public:
  const char* kind() const override { return "tanh"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
};

class Sigmoid : public Layer {
 public:
  const char* kind() const override { return "sigmoid"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
};

class UpsampleNearest2x : public Layer {
 public:
  const char* kind() const override { return "up2x"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
};

class GlobalAvgPool : public Layer {
 public:
  const char* kind() const override { return "gap"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
};

class Linear : public Layer {
 public:
  Linear(int in, int out, Init init, Rng& rng);
  const char* kind() const override { return "linear"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
  void collect_params(std::vector<Param*>& out) override;
  void reinit(Rng& rng);

 private:
  int in_, out_;
  Param w_, b_;
};

// x + [conv3 -> inorm -> relu -> conv3 -> inorm](x), channel-preserving.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(int channels, Rng& rng, Init init = Init::he);
  const char* kind() const override { return "resblock"; }
  Tensor forward(const Tensor& x, LayerCache& cache) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_out,
                  bool accumulate_params) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  std::vector<std::unique_ptr<Layer>> body_;
};

class Net {
 public:
  Net() = default;
  Net(Net&&) = default;
  Net& operator=(Net&&) = default;

  void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }
  int size() const { return static_cast<int>(layers_.size()); }
  Layer& layer(int i) { return *layers_[static_cast<std::size_t>(i)]; }
  const Layer& layer(int i) const { return *layers_[static_cast<std::size_t>(i)]; }

  // Runs layers [from, to); appends one cache per layer to the tape.
  Tensor forward(const Tensor& x, Tape& tape, int from, int to) const;
  Tensor forward(const Tensor& x, Tape& tape) const {
    return forward(x, tape, 0, size());
  }
  Tensor infer(const Tensor& x) const;

  // Walks the tape segment backwards; tape_base is the tape index of layer
  // `from`. Returns dL/d(input of layer `from`).
  Tensor backward(const Tape& tape, int tape_base, const Tensor& grad_out,
                  int from, int to, bool accumulate_params);
  Tensor backward(const Tape& tape, const Tensor& grad_out,
                  bool accumulate_params) {
    return backward(tape, 0, grad_out, 0, size(), accumulate_params);
  }

  std::vector<Param*> params();
  void zero_grads();
  std::int64_t parameter_count();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Parameter-tensor helpers shared by checkpoints and integrity digests.
void fill_normal(Tensor& t, Rng& rng, double sigma);
std::vector<Param*> collect_params(const std::vector<Net*>& nets);

}  // namespace ntljb
