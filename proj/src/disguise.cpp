#include "ntljb/disguise.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ntljb/bytes.hpp"
#include "ntljb/parallel.hpp"

#include <nlohmann/json.hpp>

namespace ntljb {

using nlohmann::json;

namespace {

constexpr double kProbEps = 1e-7;
constexpr double kSkewLimit = 1.0 - 1e-6;

double clamp_prob(double p) {
  return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

}  // namespace

// ---- generator ----

Generator::Generator(int channels, const DisguiseConfig& cfg, Rng& rng)
    : scale_(static_cast<float>(cfg.squash_scale)) {
  if (cfg.squash_scale <= 0.0 || cfg.squash_scale > 1.0)
    throw std::invalid_argument("generator: squash_scale must be in (0, 1]");
  if (cfg.width < 1 || cfg.residual_blocks < 0)
    throw std::invalid_argument("generator: bad width or depth");
  const int w = cfg.width;
  trunk_.add(std::make_unique<Conv2d>(channels, w, 7, 1, 3, Init::gan, rng));
  trunk_.add(std::make_unique<InstanceNorm>());
  trunk_.add(std::make_unique<ReLU>());
  trunk_.add(std::make_unique<Conv2d>(w, 2 * w, 3, 2, 1, Init::gan, rng));
  trunk_.add(std::make_unique<InstanceNorm>());
  trunk_.add(std::make_unique<ReLU>());
  trunk_.add(std::make_unique<Conv2d>(2 * w, 4 * w, 3, 2, 1, Init::gan, rng));
  trunk_.add(std::make_unique<InstanceNorm>());
  trunk_.add(std::make_unique<ReLU>());
  for (int b = 0; b < cfg.residual_blocks; ++b)
    trunk_.add(std::make_unique<ResidualBlock>(4 * w, rng, Init::gan));
  trunk_.add(std::make_unique<UpsampleNearest2x>());
  trunk_.add(std::make_unique<Conv2d>(4 * w, 2 * w, 3, 1, 1, Init::gan, rng));
  trunk_.add(std::make_unique<InstanceNorm>());
  trunk_.add(std::make_unique<ReLU>());
  trunk_.add(std::make_unique<UpsampleNearest2x>());
  trunk_.add(std::make_unique<Conv2d>(2 * w, w, 3, 1, 1, Init::gan, rng));
  trunk_.add(std::make_unique<InstanceNorm>());
  trunk_.add(std::make_unique<ReLU>());
  // Zero-initialized exit keeps a fresh generator at identity-by-squash.
  trunk_.add(std::make_unique<Conv2d>(w, channels, 7, 1, 3, Init::zero, rng));
}

namespace {

void combine_skip(const Tensor& x, const Tensor& r, float scale, Tensor& skew,
                  Tensor& y) {
  skew = Tensor(x.shape());
  y = Tensor(x.shape());
  const float* xp = x.data();
  const float* rp = r.data();
  float* sp = skew.data();
  float* yp = y.data();
  par::for_n(x.numel(), [=](std::int64_t i) {
    double t = static_cast<double>(scale) * xp[i];
    t = std::min(std::max(t, -kSkewLimit), kSkewLimit);
    sp[i] = static_cast<float>(t);
    yp[i] = static_cast<float>(std::tanh(std::atanh(t) + rp[i]));
  });
}

}  // namespace

Tensor Generator::forward(const Tensor& x, Pass& pass) const {
  const Tensor r = trunk_.forward(x, pass.tape);
  if (!r.same_shape(x))
    throw std::logic_error("generator trunk changed shape: " + x.shape_str() +
                           " -> " + r.shape_str());
  combine_skip(x, r, scale_, pass.skew, pass.output);
  return pass.output;
}

Tensor Generator::infer(const Tensor& x) const {
  const Tensor r = trunk_.infer(x);
  Tensor skew, y;
  combine_skip(x, r, scale_, skew, y);
  return y;
}

Tensor Generator::backward(const Pass& pass, const Tensor& grad_out) {
  const Tensor& y = pass.output;
  if (!grad_out.same_shape(y))
    throw std::invalid_argument("generator backward: gradient shape mismatch");
  Tensor dpre(y.shape());
  {
    const float* gp = grad_out.data();
    const float* yp = y.data();
    float* dp = dpre.data();
    par::for_n(y.numel(), [=](std::int64_t i) {
      const double yv = yp[i];
      dp[i] = static_cast<float>(gp[i] * (1.0 - yv * yv));
    });
  }
  Tensor dx = trunk_.backward(pass.tape, 0, dpre, 0, trunk_.size(), true);
  const float* sp = pass.skew.data();
  const float* dp = dpre.data();
  float* dxp = dx.data();
  const double scale = scale_;
  par::for_n(dx.numel(), [=](std::int64_t i) {
    const double t = sp[i];
    if (std::abs(t) < kSkewLimit)
      dxp[i] += static_cast<float>(dp[i] * scale / (1.0 - t * t));
  });
  return dx;
}

// ---- discriminator ----

PatchDiscriminator::PatchDiscriminator(int channels, int width, Rng& rng) {
  if (width < 1) throw std::invalid_argument("discriminator: bad width");
  net_.add(std::make_unique<Conv2d>(channels, width, 4, 2, 1, Init::gan, rng));
  net_.add(std::make_unique<LeakyReLU>(0.2f));
  net_.add(std::make_unique<Conv2d>(width, 2 * width, 4, 2, 1, Init::gan, rng));
  net_.add(std::make_unique<InstanceNorm>());
  net_.add(std::make_unique<LeakyReLU>(0.2f));
  net_.add(std::make_unique<Conv2d>(2 * width, 1, 4, 1, 1, Init::gan, rng));
  net_.add(std::make_unique<Sigmoid>());
}

Tensor PatchDiscriminator::forward(const Tensor& x, Pass& pass) const {
  pass.probs = net_.forward(x, pass.tape);
  return pass.probs;
}

Tensor PatchDiscriminator::infer(const Tensor& x) const { return net_.infer(x); }

Tensor PatchDiscriminator::backward(const Pass& pass, const Tensor& dprobs,
                                    bool accumulate_params) {
  return net_.backward(pass.tape, 0, dprobs, 0, net_.size(), accumulate_params);
}

// ---- ensemble ----

namespace {

Generator make_gen(int channels, const DisguiseConfig& cfg, std::uint64_t seed,
                   const char* stream) {
  Rng rng(Rng::derive(seed, stream));
  return Generator(channels, cfg, rng);
}

PatchDiscriminator make_disc(int channels, int width, std::uint64_t seed,
                             const char* stream) {
  Rng rng(Rng::derive(seed, stream));
  return PatchDiscriminator(channels, width, rng);
}

std::vector<Param*> concat_params(std::vector<Param*> a,
                                  const std::vector<Param*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

DisguiseEnsemble::DisguiseEnsemble(int resolution_, int channels_,
                                   const DisguiseConfig& cfg,
                                   std::uint64_t init_seed)
    : config(cfg),
      resolution(resolution_),
      channels(channels_),
      to_authorized(make_gen(channels_, cfg, init_seed, "disguise/gen_fwd")),
      to_unauthorized(make_gen(channels_, cfg, init_seed, "disguise/gen_rev")),
      disc_authorized(
          make_disc(channels_, cfg.disc_width, init_seed, "disguise/disc_fwd")),
      disc_unauthorized(
          make_disc(channels_, cfg.disc_width, init_seed, "disguise/disc_rev")),
      gen_opt(concat_params(to_authorized.params(), to_unauthorized.params()),
              {cfg.gen_lr, 0.5, 0.999, 1e-8}),
      disc_opt(concat_params(disc_authorized.params(),
                             disc_unauthorized.params()),
               {cfg.disc_lr, 0.5, 0.999, 1e-8}) {
  if (resolution < 8 || resolution % 4 != 0)
    throw std::invalid_argument(
        "disguise ensemble: resolution must be a multiple of 4 and >= 8, got " +
        std::to_string(resolution));
  if (channels < 1)
    throw std::invalid_argument("disguise ensemble: bad channel count");
}

DisguiseEnsemble build_ensemble(int resolution, int channels,
                                const DisguiseConfig& cfg,
                                std::uint64_t init_seed) {
  return DisguiseEnsemble(resolution, channels, cfg, init_seed);
}

std::int64_t DisguiseEnsemble::parameter_count() {
  std::int64_t n = 0;
  for (Param* p : to_authorized.params()) n += p->value.numel();
  for (Param* p : to_unauthorized.params()) n += p->value.numel();
  for (Param* p : disc_authorized.params()) n += p->value.numel();
  for (Param* p : disc_unauthorized.params()) n += p->value.numel();
  return n;
}

// ---- objectives ----

double adversarial_loss(const Tensor& real_probs, const Tensor& fake_probs,
                        GanForm form) {
  if (real_probs.numel() == 0 || fake_probs.numel() == 0)
    throw std::invalid_argument("adversarial_loss: empty probability tensor");
  auto validate = [](const Tensor& t) {
    const float* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i)
      if (!(p[i] >= 0.0f && p[i] <= 1.0f))
        throw std::invalid_argument(
            "adversarial_loss: probability outside [0, 1]");
  };
  validate(real_probs);
  validate(fake_probs);
  double real_term = 0.0, fake_term = 0.0;
  const float* rp = real_probs.data();
  const float* fp = fake_probs.data();
  if (form == GanForm::log_form) {
    for (std::int64_t i = 0; i < real_probs.numel(); ++i)
      real_term += std::log(clamp_prob(rp[i]));
    for (std::int64_t i = 0; i < fake_probs.numel(); ++i)
      fake_term += std::log(1.0 - clamp_prob(fp[i]));
  } else {
    for (std::int64_t i = 0; i < real_probs.numel(); ++i) {
      const double d = static_cast<double>(rp[i]) - 1.0;
      real_term -= d * d;
    }
    for (std::int64_t i = 0; i < fake_probs.numel(); ++i)
      fake_term -= static_cast<double>(fp[i]) * fp[i];
  }
  return real_term / static_cast<double>(real_probs.numel()) +
         fake_term / static_cast<double>(fake_probs.numel());
}

double cycle_loss(const Tensor& original, const Tensor& reconstructed) {
  if (!original.same_shape(reconstructed))
    throw std::invalid_argument("cycle_loss: shape mismatch " +
                                original.shape_str() + " vs " +
                                reconstructed.shape_str());
  const float* a = original.data();
  const float* b = reconstructed.data();
  const double sum = par::sum_n(original.numel(), [=](std::int64_t i) {
    return std::abs(static_cast<double>(a[i]) - b[i]);
  });
  return sum / static_cast<double>(original.numel());
}

double did_objective(double adv, double adv_r, double cs, double cs_r,
                     double lambda_cs) {
  if (lambda_cs < 0.0)
    throw std::invalid_argument("did_objective: lambda_cs must be >= 0");
  for (double v : {adv, adv_r, cs, cs_r})
    if (!std::isfinite(v))
      throw std::invalid_argument("did_objective: non-finite loss input");
  return adv + adv_r + lambda_cs * (cs + cs_r);
}

// Generator-side gradient of the shared adversarial value w.r.t. the fake
// probabilities (descending); the real term is constant on that side.
Tensor adversarial_fake_grad(const Tensor& fake_probs, GanForm form) {
  Tensor g(fake_probs.shape());
  const double n = static_cast<double>(fake_probs.numel());
  const float* pp = fake_probs.data();
  float* gp = g.data();
  for (std::int64_t i = 0; i < fake_probs.numel(); ++i) {
    if (form == GanForm::log_form)
      gp[i] = static_cast<float>(-1.0 / (n * (1.0 - clamp_prob(pp[i]))));
    else
      gp[i] = static_cast<float>(-2.0 * pp[i] / n);
  }
  return g;
}

// Gradient of weight * mean |rec - ref| w.r.t. rec.
Tensor cycle_grad(const Tensor& reconstructed, const Tensor& original,
                  double weight) {
  if (!reconstructed.same_shape(original))
    throw std::invalid_argument("cycle_grad: shape mismatch " +
                                reconstructed.shape_str() + " vs " +
                                original.shape_str());
  Tensor g(reconstructed.shape());
  const float w = static_cast<float>(
      weight / static_cast<double>(reconstructed.numel()));
  const float* a = reconstructed.data();
  const float* b = original.data();
  float* gp = g.data();
  par::for_n(reconstructed.numel(), [=](std::int64_t i) {
    gp[i] = a[i] > b[i] ? w : (a[i] < b[i] ? -w : 0.0f);
  });
  return g;
}

// ---- one alternating update ----

namespace {

// Gradients of the negated value, which the discriminators descend.
Tensor disc_real_grad(const Tensor& p, GanForm form) {
  Tensor g(p.shape());
  const double n = static_cast<double>(p.numel());
  const float* pp = p.data();
  float* gp = g.data();
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    if (form == GanForm::log_form)
      gp[i] = static_cast<float>(-1.0 / (n * clamp_prob(pp[i])));
    else
      gp[i] = static_cast<float>(2.0 * (static_cast<double>(pp[i]) - 1.0) / n);
  }
  return g;
}

Tensor disc_fake_grad(const Tensor& p, GanForm form) {
  Tensor g(p.shape());
  const double n = static_cast<double>(p.numel());
  const float* pp = p.data();
  float* gp = g.data();
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    if (form == GanForm::log_form)
      gp[i] = static_cast<float>(1.0 / (n * (1.0 - clamp_prob(pp[i]))));
    else
      gp[i] = static_cast<float>(2.0 * pp[i] / n);
  }
  return g;
}

void require_finite(double v, const char* term, std::int64_t step) {
  if (!std::isfinite(v))
    throw std::runtime_error("minmax_step aborted: " + std::string(term) +
                             " is not finite at step " + std::to_string(step));
}

}  // namespace

LossBundle minmax_step(DisguiseEnsemble& ens, const Tensor& batch_a,
                       const Tensor& batch_u, const DisguiseWeights& weights,
                       const MgdHook& mgd) {
  if (batch_a.ndim() != 4 || batch_u.ndim() != 4 || batch_a.dim(0) == 0 ||
      batch_u.dim(0) == 0)
    throw std::invalid_argument("minmax_step: batches must be non-empty 4-d");
  if (batch_a.dim(0) != batch_u.dim(0))
    throw std::invalid_argument("minmax_step: batch sizes differ");
  for (const Tensor* t : {&batch_a, &batch_u})
    if (t->dim(1) != ens.channels || t->dim(2) != ens.resolution ||
        t->dim(3) != ens.resolution)
      throw std::invalid_argument("minmax_step: batch shape " + t->shape_str() +
                                  " does not match the ensemble");
  if (weights.lambda_cs < 0.0 || weights.lambda_cf < 0.0 ||
      weights.lambda_ba < 0.0)
    throw std::invalid_argument("minmax_step: negative loss weight");

  const GanForm form = ens.config.gan_form;

  Generator::Pass p_fwd_u, p_rev_d, p_rev_a, p_fwd_e;
  const Tensor disguised = ens.to_authorized.forward(batch_u, p_fwd_u);
  const Tensor rec_u = ens.to_unauthorized.forward(disguised, p_rev_d);
  const Tensor rev_disguised = ens.to_unauthorized.forward(batch_a, p_rev_a);
  const Tensor rec_a = ens.to_authorized.forward(rev_disguised, p_fwd_e);

  PatchDiscriminator::Pass pd_fake_a, pd_real_a, pd_fake_u, pd_real_u;
  const Tensor prob_fake_a = ens.disc_authorized.forward(disguised, pd_fake_a);
  const Tensor prob_real_a = ens.disc_authorized.forward(batch_a, pd_real_a);
  const Tensor prob_fake_u =
      ens.disc_unauthorized.forward(rev_disguised, pd_fake_u);
  const Tensor prob_real_u = ens.disc_unauthorized.forward(batch_u, pd_real_u);

  LossBundle b;
  b.lambda_cs = weights.lambda_cs;
  b.lambda_cf = weights.lambda_cf;
  b.lambda_ba = weights.lambda_ba;
  b.adv = adversarial_loss(prob_real_a, prob_fake_a, form);
  b.adv_r = adversarial_loss(prob_real_u, prob_fake_u, form);
  b.cs = cycle_loss(batch_u, rec_u);
  b.cs_r = cycle_loss(batch_a, rec_a);
  require_finite(b.adv, "L_adv", ens.step);
  require_finite(b.adv_r, "L_adv^r", ens.step);
  require_finite(b.cs, "L_cs", ens.step);
  require_finite(b.cs_r, "L_cs^r", ens.step);

  MgdFeedback feedback;
  if (mgd) {
    feedback = mgd(disguised);
    if (!feedback.grad_disguised.same_shape(disguised))
      throw std::logic_error("minmax_step: guidance gradient shape mismatch");
    require_finite(feedback.cf, "L_cf", ens.step);
    require_finite(feedback.ba, "L_ba", ens.step);
    if (!feedback.grad_disguised.all_finite())
      throw std::runtime_error(
          "minmax_step aborted: guidance gradient is not finite at step " +
          std::to_string(ens.step));
    b.cf = feedback.cf;
    b.ba = feedback.ba;
  }
  b.total = did_objective(b.adv, b.adv_r, b.cs, b.cs_r, weights.lambda_cs) +
            weights.lambda_cf * b.cf + weights.lambda_ba * b.ba;
  require_finite(b.total, "L_total", ens.step);

  // Generator descent. Cycle gradients route through the partner generator
  // (training it too) before reaching the disguised tensors.
  ens.gen_opt.zero_grads();
  {
    const Tensor drec_u = cycle_grad(rec_u, batch_u, weights.lambda_cs);
    Tensor dd = ens.to_unauthorized.backward(p_rev_d, drec_u);
    dd.add_scaled(ens.disc_authorized.backward(
                      pd_fake_a, adversarial_fake_grad(prob_fake_a, form), false),
                  1.0f);
    if (mgd) dd.add_scaled(feedback.grad_disguised, 1.0f);
    ens.to_authorized.backward(p_fwd_u, dd);

    const Tensor drec_a = cycle_grad(rec_a, batch_a, weights.lambda_cs);
    Tensor de = ens.to_authorized.backward(p_fwd_e, drec_a);
    de.add_scaled(ens.disc_unauthorized.backward(
                      pd_fake_u, adversarial_fake_grad(prob_fake_u, form), false),
                  1.0f);
    ens.to_unauthorized.backward(p_rev_a, de);
  }
  ens.gen_opt.step();

  // Discriminator ascent on the same batch, fakes reused as detached
  // tensors (their caches predate the generator update, which is the point).
  ens.disc_opt.zero_grads();
  ens.disc_authorized.backward(pd_real_a, disc_real_grad(prob_real_a, form),
                               true);
  ens.disc_authorized.backward(pd_fake_a, disc_fake_grad(prob_fake_a, form),
                               true);
  ens.disc_unauthorized.backward(pd_real_u, disc_real_grad(prob_real_u, form),
                                 true);
  ens.disc_unauthorized.backward(pd_fake_u, disc_fake_grad(prob_fake_u, form),
                                 true);
  ens.disc_opt.step();

  ens.step += 1;
  return b;
}

// ---- checkpoints ----

const char* gan_form_name(GanForm form) {
  return form == GanForm::log_form ? "log_form" : "least_squares";
}

GanForm gan_form_from_name(const std::string& name) {
  if (name == "log_form") return GanForm::log_form;
  if (name == "least_squares") return GanForm::least_squares;
  throw std::runtime_error("unknown gan form: " + name);
}

namespace {

constexpr char kCkptMagic[8] = {'N', 'T', 'J', 'B', 'C', 'K', 'P', '1'};

void write_net_params(ByteWriter& w, const char* prefix,
                      std::vector<Param*> params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  int index = 0;
  for (Param* p : params) {
    w.str(std::string(prefix) + "." + std::to_string(index++) + "." + p->name);
    w.tensor(p->value);
  }
}

void read_net_params(ByteReader& r, const char* prefix,
                     std::vector<Param*> params, const std::string& path) {
  const std::uint32_t n = r.u32();
  if (n != params.size())
    throw std::runtime_error("checkpoint parameter count mismatch for " +
                             std::string(prefix) + ": " + path);
  int index = 0;
  for (Param* p : params) {
    const std::string name = r.str();
    const std::string expect =
        std::string(prefix) + "." + std::to_string(index++) + "." + p->name;
    if (name != expect)
      throw std::runtime_error("checkpoint tensor name mismatch, expected " +
                               expect + " got " + name + ": " + path);
    Tensor t = r.tensor();
    if (!t.same_shape(p->value))
      throw std::runtime_error("checkpoint tensor shape mismatch at " + name +
                               ": " + path);
    p->value = std::move(t);
  }
}

void write_adam(ByteWriter& w, const Adam& opt) {
  w.u32(static_cast<std::uint32_t>(opt.slots()));
  for (int i = 0; i < opt.slots(); ++i) {
    w.tensor(opt.m(i));
    w.tensor(opt.v(i));
  }
  w.u64(static_cast<std::uint64_t>(opt.step_count()));
}

void read_adam(ByteReader& r, Adam& opt, const std::string& path) {
  const std::uint32_t n = r.u32();
  if (static_cast<int>(n) != opt.slots())
    throw std::runtime_error("checkpoint optimizer slot mismatch: " + path);
  std::vector<Tensor> m, v;
  m.reserve(n);
  v.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    m.push_back(r.tensor());
    v.push_back(r.tensor());
  }
  const std::int64_t t = static_cast<std::int64_t>(r.u64());
  opt.restore(std::move(m), std::move(v), t);
}

}  // namespace

void save_ensemble(DisguiseEnsemble& ens, const std::string& path) {
  json meta;
  meta["kind"] = "disguiser";
  meta["resolution"] = ens.resolution;
  meta["channels"] = ens.channels;
  meta["step"] = ens.step;
  meta["config"] = {{"width", ens.config.width},
                    {"residual_blocks", ens.config.residual_blocks},
                    {"disc_width", ens.config.disc_width},
                    {"squash_scale", ens.config.squash_scale},
                    {"gen_lr", ens.config.gen_lr},
                    {"disc_lr", ens.config.disc_lr},
                    {"gan_form", gan_form_name(ens.config.gan_form)}};
  ByteWriter w;
  w.bytes(kCkptMagic, sizeof(kCkptMagic));
  w.u8(1);  // disguiser checkpoint
  w.str(meta.dump());
  write_net_params(w, "gen_fwd", ens.to_authorized.params());
  write_net_params(w, "gen_rev", ens.to_unauthorized.params());
  write_net_params(w, "disc_fwd", ens.disc_authorized.params());
  write_net_params(w, "disc_rev", ens.disc_unauthorized.params());
  write_adam(w, ens.gen_opt);
  write_adam(w, ens.disc_opt);
  w.write_file(path);
}

DisguiseEnsemble load_ensemble(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (r.u8() != 1)
    throw std::runtime_error("checkpoint is not a disguiser: " + path);
  const json meta = json::parse(r.str());
  if (meta.at("kind").get<std::string>() != "disguiser")
    throw std::runtime_error("checkpoint kind mismatch: " + path);
  DisguiseConfig cfg;
  const json& jc = meta.at("config");
  cfg.width = jc.at("width").get<int>();
  cfg.residual_blocks = jc.at("residual_blocks").get<int>();
  cfg.disc_width = jc.at("disc_width").get<int>();
  cfg.squash_scale = jc.at("squash_scale").get<double>();
  cfg.gen_lr = jc.at("gen_lr").get<double>();
  cfg.disc_lr = jc.at("disc_lr").get<double>();
  cfg.gan_form = gan_form_from_name(jc.at("gan_form").get<std::string>());

  DisguiseEnsemble ens(meta.at("resolution").get<int>(),
                       meta.at("channels").get<int>(), cfg, 0);
  ens.step = meta.at("step").get<std::int64_t>();
  read_net_params(r, "gen_fwd", ens.to_authorized.params(), path);
  read_net_params(r, "gen_rev", ens.to_unauthorized.params(), path);
  read_net_params(r, "disc_fwd", ens.disc_authorized.params(), path);
  read_net_params(r, "disc_rev", ens.disc_unauthorized.params(), path);
  read_adam(r, ens.gen_opt, path);
  read_adam(r, ens.disc_opt, path);
  if (!r.at_end()) throw std::runtime_error("trailing bytes in " + path);
  return ens;
}

}  // namespace ntljb
