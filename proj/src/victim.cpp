#include "ntljb/victim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ntljb/bytes.hpp"
#include "ntljb/kernels.hpp"
#include "ntljb/parallel.hpp"
#include "ntljb/sha256.hpp"

#include <nlohmann/json.hpp>

namespace ntljb {

using nlohmann::json;

namespace {

constexpr int kHeadIndex = 13;  // gap output feeds the final linear

int argmax_row(const float* row, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

}  // namespace

VictimModel::VictimModel(const VictimConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg) {
  if (cfg.widths.size() != 3)
    throw std::invalid_argument("victim: expected 3 backbone widths");
  Rng rng(Rng::derive(init_seed, "victim/init"));
  const int w0 = cfg.widths[0], w1 = cfg.widths[1], w2 = cfg.widths[2];
  net_.add(std::make_unique<Conv2d>(cfg.channels, w0, 3, 1, 1, Init::he, rng));
  net_.add(std::make_unique<ReLU>());
  net_.add(std::make_unique<Conv2d>(w0, w0, 3, 2, 1, Init::he, rng));
  net_.add(std::make_unique<ReLU>());
  net_.add(std::make_unique<Conv2d>(w0, w1, 3, 1, 1, Init::he, rng));
  net_.add(std::make_unique<ReLU>());
  net_.add(std::make_unique<Conv2d>(w1, w1, 3, 2, 1, Init::he, rng));
  net_.add(std::make_unique<ReLU>());
  net_.add(std::make_unique<Conv2d>(w1, w2, 3, 1, 1, Init::he, rng));
  net_.add(std::make_unique<ReLU>());
  net_.add(std::make_unique<Conv2d>(w2, w2, 3, 2, 1, Init::he, rng));
  net_.add(std::make_unique<ReLU>());
  net_.add(std::make_unique<GlobalAvgPool>());
  net_.add(std::make_unique<Linear>(w2, cfg.class_count, Init::he, rng));
  if (cfg.style_mix_layer <= 0 || cfg.style_mix_layer >= kHeadIndex)
    throw std::invalid_argument("victim: style_mix_layer out of range");
}

void VictimModel::require_grads() const {
  if (!grads_enabled_)
    throw std::logic_error(
        "victim gradients are disabled; the model is sealed for black-box use");
}

Tensor VictimModel::logits(const Tensor& images) const {
  if (images.ndim() != 4 || images.dim(1) != cfg_.channels ||
      images.dim(2) != cfg_.resolution || images.dim(3) != cfg_.resolution)
    throw std::invalid_argument("victim: input " + images.shape_str() +
                                " does not match model resolution " +
                                std::to_string(cfg_.resolution));
  return net_.infer(images);
}

VictimModel::TrainPass VictimModel::forward_train(const Tensor& images) const {
  TrainPass p;
  p.features = net_.forward(images, p.tape, 0, kHeadIndex);
  p.logits = net_.forward(p.features, p.tape, kHeadIndex, kHeadIndex + 1);
  return p;
}

void VictimModel::backward_train(const TrainPass& pass, const Tensor& dlogits,
                                 const Tensor* dfeatures) {
  require_grads();
  Tensor dfeat = net_.backward(pass.tape, kHeadIndex, dlogits, kHeadIndex,
                               kHeadIndex + 1, true);
  if (dfeatures) dfeat.add_scaled(*dfeatures, 1.0f);
  net_.backward(pass.tape, 0, dfeat, 0, kHeadIndex, true);
}

Tensor VictimModel::forward_front(const Tensor& images, Tape& tape) const {
  return net_.forward(images, tape, 0, cfg_.style_mix_layer);
}

VictimModel::RestPass VictimModel::forward_rest(const Tensor& feature_map) const {
  RestPass p;
  p.logits = net_.forward(feature_map, p.tape, cfg_.style_mix_layer,
                          kHeadIndex + 1);
  return p;
}

Tensor VictimModel::backward_rest(const RestPass& pass, const Tensor& dlogits) {
  require_grads();
  return net_.backward(pass.tape, 0, dlogits, cfg_.style_mix_layer,
                       kHeadIndex + 1, true);
}

void VictimModel::backward_front(const Tape& tape, const Tensor& dfeature_map) {
  require_grads();
  net_.backward(tape, 0, dfeature_map, 0, cfg_.style_mix_layer, true);
}

VictimModel VictimModel::clone() const {
  auto& self = const_cast<VictimModel&>(*this);
  VictimModel out(cfg_, 0);
  const auto src = self.net_.params();
  const auto dst = out.net_.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
  return out;
}

std::string VictimModel::parameter_digest() const {
  // Read-only walk; collect_params is non-const because it hands out
  // mutable pointers to trainers.
  auto& self = const_cast<VictimModel&>(*this);
  Sha256 h;
  for (Param* p : self.net_.params()) {
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      const float v = p->value[i];
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      const std::uint8_t le[4] = {
          static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
          static_cast<std::uint8_t>(bits >> 16),
          static_cast<std::uint8_t>(bits >> 24)};
      h.update(le, 4);
    }
  }
  return h.finish_hex();
}

void VictimModel::reinit_head(Rng& rng) {
  auto* head = dynamic_cast<Linear*>(&net_.layer(kHeadIndex));
  if (!head) throw std::logic_error("victim head is not a linear layer");
  head->reinit(rng);
}

// ---- losses ----

Tensor softmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("softmax: expected 2-d");
  const int n = logits.dim(0), c = logits.dim(1);
  Tensor p({n, c});
  const float* in = logits.data();
  float* out = p.data();
  par::for_n(n, [=](std::int64_t r) {
    const float* z = in + r * c;
    float* pr = out + r * c;
    float m = z[0];
    for (int i = 1; i < c; ++i) m = std::max(m, z[i]);
    double s = 0.0;
    for (int i = 0; i < c; ++i) s += std::exp(static_cast<double>(z[i] - m));
    for (int i = 0; i < c; ++i)
      pr[i] = static_cast<float>(std::exp(static_cast<double>(z[i] - m)) / s);
  });
  return p;
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Tensor* dlogits) {
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  const Tensor p = softmax_rows(logits);
  double loss = 0.0;
  for (int r = 0; r < n; ++r) {
    const float* z = logits.data() + static_cast<std::int64_t>(r) * c;
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c) throw std::invalid_argument("cross_entropy: bad label");
    float m = z[0];
    for (int i = 1; i < c; ++i) m = std::max(m, z[i]);
    double s = 0.0;
    for (int i = 0; i < c; ++i) s += std::exp(static_cast<double>(z[i] - m));
    loss += (m + std::log(s)) - z[y];
  }
  loss /= n;
  if (dlogits) {
    *dlogits = Tensor({n, c});
    const float inv = 1.0f / static_cast<float>(n);
    for (int r = 0; r < n; ++r) {
      const float* pr = p.data() + static_cast<std::int64_t>(r) * c;
      float* dr = dlogits->data() + static_cast<std::int64_t>(r) * c;
      const int y = labels[static_cast<std::size_t>(r)];
      for (int i = 0; i < c; ++i)
        dr[i] = (pr[i] - (i == y ? 1.0f : 0.0f)) * inv;
    }
  }
  return loss;
}

double kl_to_smoothed(const Tensor& logits, const std::vector<int>& labels,
                      double smoothing, double clamp, Tensor* dlogits) {
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("kl_to_smoothed: label count mismatch");
  if (smoothing <= 0.0 || smoothing >= 1.0)
    throw std::invalid_argument("kl_to_smoothed: smoothing must be in (0,1)");
  if (dlogits) {
    *dlogits = Tensor({n, c});
    dlogits->zero();
  }
  const double off = smoothing / c;
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const float* z = logits.data() + static_cast<std::int64_t>(r) * c;
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c)
      throw std::invalid_argument("kl_to_smoothed: bad label");
    float m = z[0];
    for (int i = 1; i < c; ++i) m = std::max(m, z[i]);
    double s = 0.0;
    for (int i = 0; i < c; ++i) s += std::exp(static_cast<double>(z[i] - m));
    const double lse = m + std::log(s);
    double kl = 0.0;
    for (int i = 0; i < c; ++i) {
      const double logp = z[i] - lse;
      const double q = off + (i == y ? 1.0 - smoothing : 0.0);
      kl += std::exp(logp) * (logp - std::log(q));
    }
    if (kl >= clamp) {
      total += clamp;  // saturated rows contribute no gradient
      continue;
    }
    total += kl;
    if (dlogits) {
      float* dr = dlogits->data() + static_cast<std::int64_t>(r) * c;
      for (int i = 0; i < c; ++i) {
        const double logp = z[i] - lse;
        const double q = off + (i == y ? 1.0 - smoothing : 0.0);
        const double si = logp - std::log(q);
        dr[i] = static_cast<float>(std::exp(logp) * (si - kl) / n);
      }
    }
  }
  return total / n;
}

double mmd_rbf(const Tensor& feat_a, const Tensor& feat_u, Tensor* grad_a,
               Tensor* grad_u) {
  if (feat_a.ndim() != 2 || feat_u.ndim() != 2 ||
      feat_a.dim(1) != feat_u.dim(1))
    throw std::invalid_argument("mmd: feature shape mismatch");
  const int na = feat_a.dim(0), nu = feat_u.dim(0), d = feat_a.dim(1);
  if (na < 2 || nu < 2)
    throw std::invalid_argument("mmd: need at least 2 samples per side");
  const float* A = feat_a.data();
  const float* U = feat_u.data();

  auto sqdist = [d](const float* x, const float* y) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      const double dk = static_cast<double>(x[k]) - y[k];
      s += dk * dk;
    }
    return s;
  };

  // Median pairwise squared distance over the pooled rows (detached).
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(na + nu) * (na + nu - 1) / 2);
  auto row = [&](int i) { return i < na ? A + static_cast<std::int64_t>(i) * d
                                        : U + static_cast<std::int64_t>(i - na) * d; };
  for (int i = 0; i < na + nu; ++i)
    for (int j = i + 1; j < na + nu; ++j) dists.push_back(sqdist(row(i), row(j)));
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                   dists.end());
  double med = dists[dists.size() / 2];
  if (!(med > 0.0)) med = 1.0;

  const double inv_bw = 1.0 / med;
  auto kern_v = [&](const float* x, const float* y) {
    return std::exp(-sqdist(x, y) * inv_bw);
  };

  double maa = 0.0, muu = 0.0, mau = 0.0;
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < na; ++j)
      maa += kern_v(A + static_cast<std::int64_t>(i) * d,
                    A + static_cast<std::int64_t>(j) * d);
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nu; ++j)
      muu += kern_v(U + static_cast<std::int64_t>(i) * d,
                    U + static_cast<std::int64_t>(j) * d);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nu; ++j)
      mau += kern_v(A + static_cast<std::int64_t>(i) * d,
                    U + static_cast<std::int64_t>(j) * d);
  maa /= static_cast<double>(na) * na;
  muu /= static_cast<double>(nu) * nu;
  mau /= static_cast<double>(na) * nu;
  const double value = maa + muu - 2.0 * mau;

  if (grad_a && grad_u) {
    *grad_a = Tensor({na, d});
    *grad_u = Tensor({nu, d});
    const double caa = 2.0 / (static_cast<double>(na) * na);
    const double cuu = 2.0 / (static_cast<double>(nu) * nu);
    const double cau = 2.0 / (static_cast<double>(na) * nu);
    float* GA = grad_a->data();
    float* GU = grad_u->data();
    par::for_n(na, [&](std::int64_t i) {
      const float* ai = A + i * d;
      float* gi = GA + i * d;
      std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
      for (int j = 0; j < na; ++j) {
        if (j == static_cast<int>(i)) continue;
        const float* aj = A + static_cast<std::int64_t>(j) * d;
        const double k = kern_v(ai, aj);
        const double w = caa * k * (-2.0 * inv_bw);
        for (int t = 0; t < d; ++t)
          acc[static_cast<std::size_t>(t)] +=
              w * (static_cast<double>(ai[t]) - aj[t]);
      }
      for (int j = 0; j < nu; ++j) {
        const float* uj = U + static_cast<std::int64_t>(j) * d;
        const double k = kern_v(ai, uj);
        const double w = -cau * k * (-2.0 * inv_bw);
        for (int t = 0; t < d; ++t)
          acc[static_cast<std::size_t>(t)] +=
              w * (static_cast<double>(ai[t]) - uj[t]);
      }
      for (int t = 0; t < d; ++t)
        gi[t] = static_cast<float>(acc[static_cast<std::size_t>(t)]);
    });
    par::for_n(nu, [&](std::int64_t i) {
      const float* ui = U + i * d;
      float* gi = GU + i * d;
      std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
      for (int j = 0; j < nu; ++j) {
        if (j == static_cast<int>(i)) continue;
        const float* uj = U + static_cast<std::int64_t>(j) * d;
        const double k = kern_v(ui, uj);
        const double w = cuu * k * (-2.0 * inv_bw);
        for (int t = 0; t < d; ++t)
          acc[static_cast<std::size_t>(t)] +=
              w * (static_cast<double>(ui[t]) - uj[t]);
      }
      for (int j = 0; j < na; ++j) {
        const float* aj = A + static_cast<std::int64_t>(j) * d;
        const double k = kern_v(ui, aj);
        const double w = -cau * k * (-2.0 * inv_bw);
        for (int t = 0; t < d; ++t)
          acc[static_cast<std::size_t>(t)] +=
              w * (static_cast<double>(ui[t]) - aj[t]);
      }
      for (int t = 0; t < d; ++t)
        gi[t] = static_cast<float>(acc[static_cast<std::size_t>(t)]);
    });
  } else if (grad_a || grad_u) {
    throw std::invalid_argument("mmd: pass both gradient outputs or neither");
  }
  return value;
}

// ---- style mixing (cuti) ----

namespace {

struct MixCache {
  Tensor content, mean, inv_std, sigma_style;
  double alpha = 0.0;
  int rows = 0, hw = 0;
};

Tensor adain_mix(const Tensor& content, const Tensor& style, double alpha,
                 MixCache& cache) {
  if (!content.same_shape(style))
    throw std::invalid_argument("style mix: content/style shape mismatch " +
                                content.shape_str() + " vs " + style.shape_str());
  const int rows = content.dim(0) * content.dim(1);
  const int hw = content.dim(2) * content.dim(3);
  Tensor normalized(content.shape());
  Tensor mean({rows}), inv_std({rows});
  kern::instance_norm_forward(rows, hw, content.data(), normalized.data(),
                              mean.data(), inv_std.data(), 1e-5f);
  Tensor mu_s({rows}), sigma_s({rows});
  const float* sp = style.data();
  for (int r = 0; r < rows; ++r) {
    const float* srow = sp + static_cast<std::int64_t>(r) * hw;
    double sum = 0.0;
    for (int i = 0; i < hw; ++i) sum += srow[i];
    const double mu = sum / hw;
    double var = 0.0;
    for (int i = 0; i < hw; ++i) {
      const double dv = srow[i] - mu;
      var += dv * dv;
    }
    mu_s[r] = static_cast<float>(mu);
    sigma_s[r] = static_cast<float>(std::sqrt(var / hw + 1e-5));
  }
  Tensor mixed(content.shape());
  const float a = static_cast<float>(alpha);
  const float* cp = content.data();
  const float* np = normalized.data();
  float* mp = mixed.data();
  for (int r = 0; r < rows; ++r) {
    const float ss = sigma_s[r], ms = mu_s[r];
    const std::int64_t base = static_cast<std::int64_t>(r) * hw;
    for (int i = 0; i < hw; ++i)
      mp[base + i] =
          (1.0f - a) * cp[base + i] + a * (np[base + i] * ss + ms);
  }
  cache.content = content;
  cache.mean = std::move(mean);
  cache.inv_std = std::move(inv_std);
  cache.sigma_style = std::move(sigma_s);
  cache.alpha = alpha;
  cache.rows = rows;
  cache.hw = hw;
  return mixed;
}

// Gradient w.r.t. content only; style statistics are detached.
Tensor adain_mix_backward(const MixCache& cache, const Tensor& grad_mixed) {
  const int rows = cache.rows, hw = cache.hw;
  Tensor g_norm(grad_mixed.shape());
  const float a = static_cast<float>(cache.alpha);
  const float* gm = grad_mixed.data();
  float* gn = g_norm.data();
  for (int r = 0; r < rows; ++r) {
    const float ss = cache.sigma_style[r];
    const std::int64_t base = static_cast<std::int64_t>(r) * hw;
    for (int i = 0; i < hw; ++i) gn[base + i] = a * ss * gm[base + i];
  }
  Tensor g_content(grad_mixed.shape());
  kern::instance_norm_backward(rows, hw, cache.content.data(),
                               cache.mean.data(), cache.inv_std.data(),
                               g_norm.data(), g_content.data());
  g_content.add_scaled(grad_mixed, 1.0f - a);
  return g_content;
}

}  // namespace

BatchLossBreakdown ntl_batch_loss(const VictimModel& model, const Tensor& xa,
                                  const std::vector<int>& ya, const Tensor& xu,
                                  const std::vector<int>& yu,
                                  const VictimTrainConfig& cfg) {
  const auto pass_a = model.forward_train(xa);
  const auto pass_u = model.forward_train(xu);
  BatchLossBreakdown b;
  b.ce = cross_entropy(pass_a.logits, ya, nullptr);
  b.kl_u = kl_to_smoothed(pass_u.logits, yu, cfg.label_smoothing, cfg.kl_clamp,
                          nullptr);
  b.mmd = mmd_rbf(pass_a.features, pass_u.features, nullptr, nullptr);
  b.total = b.ce - cfg.lambda_kl * b.kl_u -
            cfg.lambda_mmd * std::min(b.mmd, cfg.mmd_clamp);
  return b;
}

BatchLossBreakdown cuti_batch_loss(const VictimModel& model, const Tensor& xa,
                                   const std::vector<int>& ya, const Tensor& xu,
                                   const std::vector<int>& yu,
                                   const VictimTrainConfig& cfg) {
  Tape front_a, front_u;
  const Tensor ca = model.forward_front(xa, front_a);
  const Tensor cu = model.forward_front(xu, front_u);
  MixCache mix;
  const Tensor mixed = adain_mix(cu, ca, cfg.style_mix_weight, mix);
  BatchLossBreakdown b;
  b.ce = cross_entropy(model.forward_rest(ca).logits, ya, nullptr);
  b.kl_u = kl_to_smoothed(model.forward_rest(cu).logits, yu,
                          cfg.label_smoothing, cfg.kl_clamp, nullptr);
  b.kl_mixed = kl_to_smoothed(model.forward_rest(mixed).logits, yu,
                              cfg.label_smoothing, cfg.kl_clamp, nullptr);
  b.total = b.ce - cfg.lambda_kl * (b.kl_u + b.kl_mixed);
  return b;
}

// ---- evaluation ----

double eval_accuracy(
    const std::function<std::vector<int>(const Tensor&)>& predict,
    const SampleSet& set, int batch_size) {
  if (!set.labeled()) throw std::invalid_argument("eval: unlabeled sample set");
  if (set.count() == 0) throw std::invalid_argument("eval: empty sample set");
  std::int64_t correct = 0;
  for (const auto& batch : make_batches(set.count(), batch_size, false)) {
    const Tensor x = set.batch(batch);
    const std::vector<int> pred = predict(x);
    if (pred.size() != batch.size())
      throw std::logic_error("eval: predictor returned wrong count");
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (pred[i] == set.labels[static_cast<std::size_t>(batch[i])]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / set.count();
}

VictimMetrics evaluate_victim(const VictimModel& model, const DomainPair& pair) {
  if (model.resolution() != pair.resolution)
    throw std::invalid_argument("evaluate: model resolution " +
                                std::to_string(model.resolution()) +
                                " != pair resolution " +
                                std::to_string(pair.resolution));
  auto predict = [&](const Tensor& x) {
    const Tensor z = model.logits(x);
    std::vector<int> out(static_cast<std::size_t>(z.dim(0)));
    for (int r = 0; r < z.dim(0); ++r)
      out[static_cast<std::size_t>(r)] =
          argmax_row(z.data() + static_cast<std::int64_t>(r) * z.dim(1), z.dim(1));
    return out;
  };
  VictimMetrics m;
  m.authorized_acc = eval_accuracy(predict, pair.authorized_test);
  m.unauthorized_acc = eval_accuracy(predict, pair.unauthorized_test);
  return m;
}

// ---- training ----

namespace {

struct Shuffled {
  std::vector<int> order;
  explicit Shuffled(int n, std::uint64_t seed) {
    Rng rng(seed);
    order = rng.permutation(n);
  }
  std::vector<int> pick(const std::vector<int>& batch) const {
    std::vector<int> out;
    out.reserve(batch.size());
    for (int i : batch) out.push_back(order[static_cast<std::size_t>(i)]);
    return out;
  }
};

void check_finite(double v, const char* term, int step) {
  if (!std::isfinite(v))
    throw std::runtime_error("victim training diverged: " + std::string(term) +
                             " is not finite at step " + std::to_string(step));
}

}  // namespace

VictimTrainResult train_victim(const DomainPair& pair, const VictimConfig& arch,
                               const VictimTrainConfig& cfg) {
  if (cfg.epochs <= 0)
    throw std::invalid_argument("train_victim: epochs must be >= 1");
  if (cfg.batch_size < 2)
    throw std::invalid_argument("train_victim: batch_size must be >= 2");
  if (arch.resolution != pair.resolution || arch.channels != pair.channels ||
      arch.class_count != pair.class_count)
    throw std::invalid_argument("train_victim: architecture does not match pair");
  const bool supervised = cfg.method == "supervised";
  const bool ntl = cfg.method == "ntl";
  const bool cuti = cfg.method == "cuti";
  if (!supervised && !ntl && !cuti)
    throw std::invalid_argument("train_victim: unknown method '" + cfg.method +
                                "' (supervised | ntl | cuti)");
  if (cuti && (cfg.style_mix_weight <= 0.0 || cfg.style_mix_weight > 1.0))
    throw std::invalid_argument("train_victim: style_mix_weight must be in (0,1]");

  VictimTrainResult result;
  result.model = VictimModel(arch, cfg.seed);
  VictimModel& model = result.model;
  Adam opt(model.params(), {cfg.lr, 0.9, 0.999, 1e-8});

  const SampleSet& ta = pair.authorized_train;
  const SampleSet& tu = pair.unauthorized_train;
  if (!ta.labeled() || (!supervised && !tu.labeled()))
    throw std::invalid_argument("train_victim: training splits must be labeled");

  int global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Shuffled pa(ta.count(),
                      Rng::derive(cfg.seed, "victim/shuffle_a",
                                  static_cast<std::uint64_t>(epoch)));
    const Shuffled pu(tu.count(),
                      Rng::derive(cfg.seed, "victim/shuffle_u",
                                  static_cast<std::uint64_t>(epoch)));
    const auto ba = make_batches(ta.count(), cfg.batch_size, !supervised);
    const auto bu = make_batches(tu.count(), cfg.batch_size, true);
    const std::size_t steps =
        supervised ? ba.size() : std::min(ba.size(), bu.size());
    if (steps == 0)
      throw std::invalid_argument("train_victim: not enough samples for one batch");

    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps; ++s, ++global_step) {
      const std::vector<int> ia = pa.pick(ba[s]);
      const Tensor xa = ta.batch(ia);
      const std::vector<int> ya = ta.labels_for(ia);

      opt.zero_grads();
      double loss = 0.0;
      if (supervised) {
        const auto pass = model.forward_train(xa);
        Tensor dl;
        loss = cross_entropy(pass.logits, ya, &dl);
        check_finite(loss, "cross_entropy", global_step);
        model.backward_train(pass, dl, nullptr);
      } else {
        const std::vector<int> iu = pu.pick(bu[s]);
        const Tensor xu = tu.batch(iu);
        const std::vector<int> yu = tu.labels_for(iu);
        if (ntl) {
          const auto pass_a = model.forward_train(xa);
          const auto pass_u = model.forward_train(xu);
          Tensor dla, dlu;
          const double ce = cross_entropy(pass_a.logits, ya, &dla);
          const double kl = kl_to_smoothed(pass_u.logits, yu,
                                           cfg.label_smoothing, cfg.kl_clamp,
                                           &dlu);
          Tensor gfa, gfu;
          const double mmd =
              mmd_rbf(pass_a.features, pass_u.features, &gfa, &gfu);
          check_finite(ce, "cross_entropy", global_step);
          check_finite(kl, "unauthorized_kl", global_step);
          check_finite(mmd, "mmd", global_step);
          loss = ce - cfg.lambda_kl * kl -
                 cfg.lambda_mmd * std::min(mmd, cfg.mmd_clamp);
          dlu.scale(static_cast<float>(-cfg.lambda_kl));
          if (mmd < cfg.mmd_clamp) {
            gfa.scale(static_cast<float>(-cfg.lambda_mmd));
            gfu.scale(static_cast<float>(-cfg.lambda_mmd));
          } else {
            gfa.zero();
            gfu.zero();
          }
          model.backward_train(pass_a, dla, &gfa);
          model.backward_train(pass_u, dlu, &gfu);
        } else {  // cuti
          Tape front_a, front_u;
          const Tensor ca = model.forward_front(xa, front_a);
          const Tensor cu = model.forward_front(xu, front_u);
          auto rest_a = model.forward_rest(ca);
          auto rest_u = model.forward_rest(cu);
          MixCache mix;
          const Tensor mixed = adain_mix(cu, ca, cfg.style_mix_weight, mix);
          auto rest_m = model.forward_rest(mixed);

          Tensor dla, dlu, dlm;
          const double ce = cross_entropy(rest_a.logits, ya, &dla);
          const double klu = kl_to_smoothed(rest_u.logits, yu,
                                            cfg.label_smoothing, cfg.kl_clamp,
                                            &dlu);
          const double klm = kl_to_smoothed(rest_m.logits, yu,
                                            cfg.label_smoothing, cfg.kl_clamp,
                                            &dlm);
          check_finite(ce, "cross_entropy", global_step);
          check_finite(klu, "unauthorized_kl", global_step);
          check_finite(klm, "mixed_kl", global_step);
          loss = ce - cfg.lambda_kl * (klu + klm);
          dlu.scale(static_cast<float>(-cfg.lambda_kl));
          dlm.scale(static_cast<float>(-cfg.lambda_kl));

          const Tensor dca = model.backward_rest(rest_a, dla);
          Tensor dcu = model.backward_rest(rest_u, dlu);
          const Tensor dmix = model.backward_rest(rest_m, dlm);
          dcu.add_scaled(adain_mix_backward(mix, dmix), 1.0f);
          model.backward_front(front_a, dca);
          model.backward_front(front_u, dcu);
        }
      }
      opt.step();
      epoch_loss += loss;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(steps));
  }
  result.metrics = evaluate_victim(model, pair);
  return result;
}

// ---- checkpoints ----

namespace {
constexpr char kCkptMagic[8] = {'N', 'T', 'J', 'B', 'C', 'K', 'P', '1'};
}

void save_victim(const VictimModel& model, const std::string& path,
                 const std::string& provenance_json) {
  auto& m = const_cast<VictimModel&>(model);
  json meta;
  meta["kind"] = "victim";
  meta["config"] = {{"widths", model.config().widths},
                    {"class_count", model.config().class_count},
                    {"resolution", model.config().resolution},
                    {"channels", model.config().channels},
                    {"style_mix_layer", model.config().style_mix_layer}};
  ByteWriter w;
  w.bytes(kCkptMagic, sizeof(kCkptMagic));
  w.u8(0);  // victim checkpoint
  w.str(meta.dump());
  w.str(provenance_json.empty() ? "{}" : provenance_json);
  const auto params = m.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  int index = 0;
  for (Param* p : params) {
    w.str(std::to_string(index++) + "." + p->name);
    w.tensor(p->value);
  }
  w.write_file(path);
}

LoadedVictim load_victim(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (r.u8() != 0)
    throw std::runtime_error("checkpoint is not a victim model: " + path);
  const json meta = json::parse(r.str());
  if (meta.at("kind").get<std::string>() != "victim")
    throw std::runtime_error("checkpoint kind mismatch: " + path);
  VictimConfig cfg;
  const json& jc = meta.at("config");
  cfg.widths = jc.at("widths").get<std::vector<int>>();
  cfg.class_count = jc.at("class_count").get<int>();
  cfg.resolution = jc.at("resolution").get<int>();
  cfg.channels = jc.at("channels").get<int>();
  cfg.style_mix_layer = jc.at("style_mix_layer").get<int>();

  LoadedVictim out;
  out.provenance_json = r.str();
  out.model = VictimModel(cfg, 0);
  const auto params = out.model.params();
  const std::uint32_t n = r.u32();
  if (n != params.size())
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  int index = 0;
  for (Param* p : params) {
    const std::string name = r.str();
    const std::string expect = std::to_string(index++) + "." + p->name;
    if (name != expect)
      throw std::runtime_error("checkpoint tensor name mismatch, expected " +
                               expect + " got " + name + ": " + path);
    Tensor t = r.tensor();
    if (!t.same_shape(p->value))
      throw std::runtime_error("checkpoint tensor shape mismatch at " + name +
                               ": " + path);
    p->value = std::move(t);
  }
  if (!r.at_end()) throw std::runtime_error("trailing bytes in " + path);
  return out;
}

}  // namespace ntljb
