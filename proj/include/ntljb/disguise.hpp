#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ntljb/adam.hpp"
#include "ntljb/layers.hpp"
#include "ntljb/tensor.hpp"

// Bidirectional disguising networks and their adversarial / cycle objectives.
// Two generators translate images between the unauthorized and authorized
// looks; two patch discriminators judge each direction. minmax_step performs
// one alternating update: the generators descend the shared objective, the
// discriminators ascend it.

namespace ntljb {

enum class GanForm {
  log_form,       // E[log p_real] + E[log(1 - p_fake)]
  least_squares,  // -(E[(p_real - 1)^2] + E[p_fake^2]), a common stabilization
};

const char* gan_form_name(GanForm form);
GanForm gan_form_from_name(const std::string& name);

struct DisguiseConfig {
  int width = 12;           // channels after the first generator conv
  int residual_blocks = 2;  // trunk depth at the bottleneck resolution
  int disc_width = 12;
  // The identity skip feeds squash_scale * x around the trunk, so a
  // zero-initialized trunk exit makes a fresh generator reproduce its input
  // scaled by squash_scale. Must be in (0, 1]; 1 means exact identity but a
  // steep skip slope near saturation.
  double squash_scale = 0.95;
  double gen_lr = 2e-4;
  double disc_lr = 2e-4;
  GanForm gan_form = GanForm::log_form;
};

// Image-to-image generator: y = tanh(atanh(squash_scale * x) + trunk(x)).
// The trunk downsamples twice, runs residual blocks, upsamples back, and
// ends in a zero-initialized conv, so a fresh generator is an identity map
// up to squash_scale. tanh keeps outputs in [-1, 1] for any trunk.
class Generator {
 public:
  Generator(int channels, const DisguiseConfig& cfg, Rng& rng);

  struct Pass {
    Tape tape;     // trunk layer caches
    Tensor skew;   // clamped squash_scale * x (skip-path backward)
    Tensor output; // tanh output (backward reuses 1 - y^2)
  };
  Tensor forward(const Tensor& x, Pass& pass) const;
  Tensor infer(const Tensor& x) const;
  // Returns dL/dx; always accumulates parameter gradients.
  Tensor backward(const Pass& pass, const Tensor& grad_out);

  std::vector<Param*> params() { return trunk_.params(); }

 private:
  Net trunk_;
  float scale_;
};

// Patch judge: probabilities in (0, 1), one per receptive-field patch,
// shaped {n, 1, ph, pw}.
class PatchDiscriminator {
 public:
  PatchDiscriminator(int channels, int width, Rng& rng);

  struct Pass {
    Tape tape;
    Tensor probs;
  };
  Tensor forward(const Tensor& x, Pass& pass) const;
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Pass& pass, const Tensor& dprobs,
                  bool accumulate_params);

  std::vector<Param*> params() { return net_.params(); }

 private:
  Net net_;
};

struct DisguiseEnsemble {
  DisguiseEnsemble(int resolution, int channels, const DisguiseConfig& cfg,
                   std::uint64_t init_seed);

  DisguiseConfig config;
  int resolution = 0;
  int channels = 0;
  Generator to_authorized;    // disguises unauthorized inputs
  Generator to_unauthorized;  // reverse direction, also the cycle re-mapper
  PatchDiscriminator disc_authorized;    // real authorized vs disguised
  PatchDiscriminator disc_unauthorized;  // real unauthorized vs reverse-disguised
  Adam gen_opt;
  Adam disc_opt;
  std::int64_t step = 0;

  std::int64_t parameter_count();
};

DisguiseEnsemble build_ensemble(int resolution, int channels,
                                const DisguiseConfig& cfg,
                                std::uint64_t init_seed);

// Per-step objective values. cf/ba are zero when no guidance hook runs.
struct LossBundle {
  double adv = 0.0;
  double adv_r = 0.0;
  double cs = 0.0;
  double cs_r = 0.0;
  double cf = 0.0;
  double ba = 0.0;
  double total = 0.0;
  double lambda_cs = 0.0;
  double lambda_cf = 0.0;
  double lambda_ba = 0.0;
};

struct DisguiseWeights {
  double lambda_cs = 10.0;
  double lambda_cf = 0.01;
  double lambda_ba = 0.01;
};

// Shared adversarial value: the discriminator ascends it, the generator
// descends it. Probabilities are validated to [0, 1] and clamped to
// [eps, 1 - eps] (eps = 1e-7) inside the logs, so the log form lies in
// [2 log eps, 0] and the least-squares form in [-2, 0].
double adversarial_loss(const Tensor& real_probs, const Tensor& fake_probs,
                        GanForm form = GanForm::log_form);

// Mean absolute per-element difference; >= 0, 0 iff exact reconstruction.
double cycle_loss(const Tensor& original, const Tensor& reconstructed);

// Generator-side gradient of the shared adversarial value w.r.t. the fake
// probabilities (the real term is constant on that side).
Tensor adversarial_fake_grad(const Tensor& fake_probs,
                             GanForm form = GanForm::log_form);

// Gradient of weight * cycle_loss w.r.t. the reconstruction.
Tensor cycle_grad(const Tensor& reconstructed, const Tensor& original,
                  double weight = 1.0);

// L_adv + L_adv_r + lambda_cs * (L_cs + L_cs_r); rejects non-finite inputs.
double did_objective(double adv, double adv_r, double cs, double cs_r,
                     double lambda_cs);

// Model-guided feedback injected into the generator step: gradient of the
// already-weighted guidance terms w.r.t. the disguised batch, plus the raw
// loss values for reporting.
struct MgdFeedback {
  Tensor grad_disguised;
  double cf = 0.0;
  double ba = 0.0;
};
using MgdHook = std::function<MgdFeedback(const Tensor& disguised)>;

// One alternating update on one batch pair. Generator step first, then the
// discriminators reuse the same (now stale) disguised tensors as detached
// fakes. Both optimizer states advance exactly once. A non-finite objective
// term aborts before any update, naming the term. No randomness is drawn
// here; the only random inputs arrive through the hook.
LossBundle minmax_step(DisguiseEnsemble& ens, const Tensor& batch_a,
                       const Tensor& batch_u, const DisguiseWeights& weights,
                       const MgdHook& mgd = nullptr);

// Checkpoints carry all four networks, both optimizer states, and the step
// counter, so a reloaded ensemble continues bitwise-identically.
void save_ensemble(DisguiseEnsemble& ens, const std::string& path);
DisguiseEnsemble load_ensemble(const std::string& path);

}  // namespace ntljb
