#include "ntljb/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "ntljb/kernels.hpp"
#include "ntljb/parallel.hpp"

namespace ntljb {

void fill_normal(Tensor& t, Rng& rng, double sigma) {
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.normal() * sigma);
}

namespace {

void require_4d(const Tensor& x, const char* who) {
  if (x.ndim() != 4)
    throw std::invalid_argument(std::string(who) + ": expected 4-d input, got " +
                                x.shape_str());
}

}  // namespace

// ---- Conv2d ----

Conv2d::Conv2d(int c_in, int c_out, int kernel, int stride, int pad, Init init,
               Rng& rng, bool bias)
    : c_in_(c_in),
      c_out_(c_out),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      w_("w", Tensor({c_out, c_in, kernel, kernel})) {
  switch (init) {
    case Init::he:
      fill_normal(w_.value, rng,
                  std::sqrt(2.0 / (static_cast<double>(c_in) * kernel * kernel)));
      break;
    case Init::gan:
      fill_normal(w_.value, rng, 0.02);
      break;
    case Init::zero:
      break;
  }
  if (bias) b_ = std::make_unique<Param>("b", Tensor({c_out}));
}

Tensor Conv2d::forward(const Tensor& x, LayerCache& cache) const {
  require_4d(x, "conv");
  if (x.dim(1) != c_in_)
    throw std::invalid_argument("conv: channel mismatch, input " +
                                x.shape_str() + " expects c_in=" +
                                std::to_string(c_in_));
  kern::ConvShape s{x.dim(0), c_in_,  x.dim(2), x.dim(3),
                    c_out_,   kernel_, stride_,  pad_};
  if (!s.valid()) throw std::invalid_argument("conv: input too small for kernel");
  Tensor y({s.n, s.c_out, s.h_out(), s.w_out()});
  kern::conv2d_forward(s, x.data(), w_.value.data(),
                       b_ ? b_->value.data() : nullptr, y.data());
  cache.input = x;
  return y;
}

Tensor Conv2d::backward(const LayerCache& cache, const Tensor& grad_out,
                        bool accumulate_params) {
  const Tensor& x = cache.input;
  kern::ConvShape s{x.dim(0), c_in_,  x.dim(2), x.dim(3),
                    c_out_,   kernel_, stride_,  pad_};
  Tensor gx(x.shape());
  kern::conv2d_backward_input(s, grad_out.data(), w_.value.data(), gx.data());
  if (accumulate_params)
    kern::conv2d_backward_params(s, x.data(), grad_out.data(), w_.grad.data(),
                                 b_ ? b_->grad.data() : nullptr);
  return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&w_);
  if (b_) out.push_back(b_.get());
}

// ---- InstanceNorm (no affine) ----

Tensor InstanceNorm::forward(const Tensor& x, LayerCache& cache) const {
  require_4d(x, "inorm");
  const int rows = x.dim(0) * x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  Tensor mean({rows}), inv_std({rows});
  kern::instance_norm_forward(rows, hw, x.data(), y.data(), mean.data(),
                              inv_std.data(), eps_);
  cache.input = x;
  cache.mean = std::move(mean);
  cache.inv_std = std::move(inv_std);
  return y;
}

Tensor InstanceNorm::backward(const LayerCache& cache, const Tensor& grad_out,
                              bool) {
  const Tensor& x = cache.input;
  const int rows = x.dim(0) * x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  Tensor gx(x.shape());
  kern::instance_norm_backward(rows, hw, x.data(), cache.mean.data(),
                               cache.inv_std.data(), grad_out.data(),
                               gx.data());
  return gx;
}

// ---- pointwise activations ----

Tensor ReLU::forward(const Tensor& x, LayerCache& cache) const {
  Tensor y(x.shape());
  const float* in = x.data();
  float* out = y.data();
  par::for_n(x.numel(), [=](std::int64_t i) { out[i] = in[i] > 0.0f ? in[i] : 0.0f; });
  cache.input = x;
  return y;
}

Tensor ReLU::backward(const LayerCache& cache, const Tensor& grad_out, bool) {
  Tensor gx(cache.input.shape());
  const float* in = cache.input.data();
  const float* g = grad_out.data();
  float* out = gx.data();
  par::for_n(gx.numel(),
             [=](std::int64_t i) { out[i] = in[i] > 0.0f ? g[i] : 0.0f; });
  return gx;
}

Tensor LeakyReLU::forward(const Tensor& x, LayerCache& cache) const {
  Tensor y(x.shape());
  const float* in = x.data();
  float* out = y.data();
  const float s = slope_;
  par::for_n(x.numel(),
             [=](std::int64_t i) { out[i] = in[i] > 0.0f ? in[i] : s * in[i]; });
  cache.input = x;
  return y;
}

Tensor LeakyReLU::backward(const LayerCache& cache, const Tensor& grad_out,
                           bool) {
  Tensor gx(cache.input.shape());
  const float* in = cache.input.data();
  const float* g = grad_out.data();
  float* out = gx.data();
  const float s = slope_;
  par::for_n(gx.numel(),
             [=](std::int64_t i) { out[i] = in[i] > 0.0f ? g[i] : s * g[i]; });
  return gx;
}

Tensor Tanh::forward(const Tensor& x, LayerCache& cache) const {
  Tensor y(x.shape());
  const float* in = x.data();
  float* out = y.data();
  par::for_n(x.numel(), [=](std::int64_t i) { out[i] = std::tanh(in[i]); });
  cache.output = y;
  return y;
}

Tensor Tanh::backward(const LayerCache& cache, const Tensor& grad_out, bool) {
  Tensor gx(cache.output.shape());
  const float* y = cache.output.data();
  const float* g = grad_out.data();
  float* out = gx.data();
  par::for_n(gx.numel(),
             [=](std::int64_t i) { out[i] = g[i] * (1.0f - y[i] * y[i]); });
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x, LayerCache& cache) const {
  Tensor y(x.shape());
  const float* in = x.data();
  float* out = y.data();
  par::for_n(x.numel(), [=](std::int64_t i) {
    out[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(in[i]))));
  });
  cache.output = y;
  return y;
}

Tensor Sigmoid::backward(const LayerCache& cache, const Tensor& grad_out,
                         bool) {
  Tensor gx(cache.output.shape());
  const float* y = cache.output.data();
  const float* g = grad_out.data();
  float* out = gx.data();
  par::for_n(gx.numel(),
             [=](std::int64_t i) { out[i] = g[i] * y[i] * (1.0f - y[i]); });
  return gx;
}

// ---- resampling / pooling ----

Tensor UpsampleNearest2x::forward(const Tensor& x, LayerCache& cache) const {
  require_4d(x, "up2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, 2 * h, 2 * w});
  const float* in = x.data();
  float* out = y.data();
  par::for_n(static_cast<std::int64_t>(n) * c * h, [=](std::int64_t row) {
    const float* src = in + row * w;
    const std::int64_t plane = row / h;
    const std::int64_t hi = row % h;
    float* d0 = out + (plane * 2 * h + 2 * hi) * (2 * w);
    float* d1 = d0 + 2 * w;
    for (int i = 0; i < w; ++i) {
      d0[2 * i] = src[i];
      d0[2 * i + 1] = src[i];
      d1[2 * i] = src[i];
      d1[2 * i + 1] = src[i];
    }
  });
  cache.input = x;
  return y;
}

Tensor UpsampleNearest2x::backward(const LayerCache& cache,
                                   const Tensor& grad_out, bool) {
  const Tensor& x = cache.input;
  const int h = x.dim(2), w = x.dim(3);
  Tensor gx(x.shape());
  const float* g = grad_out.data();
  float* out = gx.data();
  par::for_n(static_cast<std::int64_t>(x.dim(0)) * x.dim(1) * h,
             [=](std::int64_t row) {
               const std::int64_t plane = row / h;
               const std::int64_t hi = row % h;
               const float* g0 = g + (plane * 2 * h + 2 * hi) * (2 * w);
               const float* g1 = g0 + 2 * w;
               float* dst = out + row * w;
               for (int i = 0; i < w; ++i)
                 dst[i] = g0[2 * i] + g0[2 * i + 1] + g1[2 * i] + g1[2 * i + 1];
             });
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, LayerCache& cache) const {
  require_4d(x, "gap");
  const int n = x.dim(0), c = x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  const float* in = x.data();
  float* out = y.data();
  par::for_n(static_cast<std::int64_t>(n) * c, [=](std::int64_t row) {
    double s = 0.0;
    const float* src = in + row * hw;
    for (int i = 0; i < hw; ++i) s += src[i];
    out[row] = static_cast<float>(s / hw);
  });
  cache.input = x;
  return y;
}

Tensor GlobalAvgPool::backward(const LayerCache& cache, const Tensor& grad_out,
                               bool) {
  const Tensor& x = cache.input;
  const int hw = x.dim(2) * x.dim(3);
  Tensor gx(x.shape());
  const float* g = grad_out.data();
  float* out = gx.data();
  const float inv = 1.0f / static_cast<float>(hw);
  par::for_n(static_cast<std::int64_t>(x.dim(0)) * x.dim(1),
             [=](std::int64_t row) {
               const float gv = g[row] * inv;
               float* dst = out + row * hw;
               for (int i = 0; i < hw; ++i) dst[i] = gv;
             });
  return gx;
}

// ---- Linear ----

Linear::Linear(int in, int out, Init init, Rng& rng)
    : in_(in),
      out_(out),
      w_("w", Tensor({out, in})),
      b_("b", Tensor({out})) {
  switch (init) {
    case Init::he:
      fill_normal(w_.value, rng, std::sqrt(2.0 / in));
      break;
    case Init::gan:
      fill_normal(w_.value, rng, 0.02);
      break;
    case Init::zero:
      break;
  }
}

void Linear::reinit(Rng& rng) {
  fill_normal(w_.value, rng, std::sqrt(2.0 / in_));
  b_.value.zero();
}

Tensor Linear::forward(const Tensor& x, LayerCache& cache) const {
  if (x.ndim() != 2 || x.dim(1) != in_)
    throw std::invalid_argument("linear: bad input " + x.shape_str());
  const int n = x.dim(0);
  Tensor y({n, out_});
  const float* in = x.data();
  const float* w = w_.value.data();
  const float* b = b_.value.data();
  float* out = y.data();
  const int d_in = in_, d_out = out_;
  par::for_n(static_cast<std::int64_t>(n) * d_out, [=](std::int64_t idx) {
    const std::int64_t r = idx / d_out;
    const int o = static_cast<int>(idx % d_out);
    float acc = b[o];
    const float* xr = in + r * d_in;
    const float* wr = w + static_cast<std::int64_t>(o) * d_in;
    for (int i = 0; i < d_in; ++i) acc += wr[i] * xr[i];
    out[idx] = acc;
  });
  cache.input = x;
  return y;
}

Tensor Linear::backward(const LayerCache& cache, const Tensor& grad_out,
                        bool accumulate_params) {
  const Tensor& x = cache.input;
  const int n = x.dim(0);
  Tensor gx({n, in_});
  {
    const float* g = grad_out.data();
    const float* w = w_.value.data();
    float* out = gx.data();
    const int d_in = in_, d_out = out_;
    par::for_n(static_cast<std::int64_t>(n) * d_in, [=](std::int64_t idx) {
      const std::int64_t r = idx / d_in;
      const int i = static_cast<int>(idx % d_in);
      float acc = 0.0f;
      const float* gr = g + r * d_out;
      for (int o = 0; o < d_out; ++o)
        acc += gr[o] * w[static_cast<std::int64_t>(o) * d_in + i];
      out[idx] = acc;
    });
  }
  if (accumulate_params) {
    const float* g = grad_out.data();
    const float* in = x.data();
    float* gw = w_.grad.data();
    float* gb = b_.grad.data();
    const int d_in = in_, d_out = out_;
    par::for_n(static_cast<std::int64_t>(d_out) * d_in, [=](std::int64_t idx) {
      const int o = static_cast<int>(idx / d_in);
      const int i = static_cast<int>(idx % d_in);
      float acc = 0.0f;
      for (int r = 0; r < n; ++r)
        acc += g[static_cast<std::int64_t>(r) * d_out + o] *
               in[static_cast<std::int64_t>(r) * d_in + i];
      gw[idx] += acc;
    });
    par::for_n(d_out, [=](std::int64_t o) {
      float acc = 0.0f;
      for (int r = 0; r < n; ++r)
        acc += g[static_cast<std::int64_t>(r) * d_out + o];
      gb[o] += acc;
    });
  }
  return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// ---- ResidualBlock ----

ResidualBlock::ResidualBlock(int channels, Rng& rng, Init init) {
  body_.push_back(
      std::make_unique<Conv2d>(channels, channels, 3, 1, 1, init, rng));
  body_.push_back(std::make_unique<InstanceNorm>());
  body_.push_back(std::make_unique<ReLU>());
  body_.push_back(
      std::make_unique<Conv2d>(channels, channels, 3, 1, 1, init, rng));
  body_.push_back(std::make_unique<InstanceNorm>());
}

Tensor ResidualBlock::forward(const Tensor& x, LayerCache& cache) const {
  cache.children.resize(body_.size());
  Tensor h = x;
  for (std::size_t i = 0; i < body_.size(); ++i)
    h = body_[i]->forward(h, cache.children[i]);
  h.add_scaled(x, 1.0f);
  return h;
}

Tensor ResidualBlock::backward(const LayerCache& cache, const Tensor& grad_out,
                               bool accumulate_params) {
  Tensor g = grad_out;
  for (std::size_t i = body_.size(); i-- > 0;)
    g = body_[i]->backward(cache.children[i], g, accumulate_params);
  g.add_scaled(grad_out, 1.0f);
  return g;
}

void ResidualBlock::collect_params(std::vector<Param*>& out) {
  for (auto& l : body_) l->collect_params(out);
}

// ---- Net ----

Tensor Net::forward(const Tensor& x, Tape& tape, int from, int to) const {
  Tensor h = x;
  for (int i = from; i < to; ++i) {
    tape.emplace_back();
    h = layers_[static_cast<std::size_t>(i)]->forward(h, tape.back());
  }
  return h;
}

Tensor Net::infer(const Tensor& x) const {
  Tensor h = x;
  for (auto& l : layers_) {
    LayerCache scratch;
    h = l->forward(h, scratch);
  }
  return h;
}

Tensor Net::backward(const Tape& tape, int tape_base, const Tensor& grad_out,
                     int from, int to, bool accumulate_params) {
  Tensor g = grad_out;
  for (int i = to; i-- > from;) {
    const LayerCache& c = tape[static_cast<std::size_t>(tape_base + i - from)];
    g = layers_[static_cast<std::size_t>(i)]->backward(c, g, accumulate_params);
  }
  return g;
}

std::vector<Param*> Net::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

void Net::zero_grads() {
  for (Param* p : params()) p->grad.zero();
}

std::int64_t Net::parameter_count() {
  std::int64_t n = 0;
  for (Param* p : params()) n += p->value.numel();
  return n;
}

std::vector<Param*> collect_params(const std::vector<Net*>& nets) {
  std::vector<Param*> out;
  for (Net* n : nets)
    for (Param* p : n->params()) out.push_back(p);
  return out;
}

}  // namespace ntljb
