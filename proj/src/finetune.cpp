#include "ntljb/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <stdexcept>

#include "ntljb/adam.hpp"
#include "ntljb/rng.hpp"

namespace ntljb {

namespace {

Tensor add_gaussian(const Tensor& x, Rng& rng, double sigma) {
  Tensor out = x;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(static_cast<double>(out[i]) +
                                rng.normal(0.0, sigma));
  return out;
}

// 3x3 mean over in-bounds neighbors; border pixels average fewer taps, so
// the output stays inside the input's value range.
Tensor mean_blur_3x3(const Tensor& x) {
  if (x.ndim() != 4)
    throw std::invalid_argument("mean_blur_3x3: expected a {n,c,h,w} batch");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(x.shape());
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int yi = 0; yi < h; ++yi)
        for (int xi = 0; xi < w; ++xi) {
          double sum = 0.0;
          int taps = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = yi + dy, xx = xi + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              sum += static_cast<double>(x.at(ni, ci, yy, xx));
              ++taps;
            }
          out.at(ni, ci, yi, xi) = static_cast<float>(sum / taps);
        }
  return out;
}

Tensor add_jitter(const Tensor& x, Rng& rng, double amplitude) {
  Tensor out = x;
  for (std::int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(static_cast<double>(out[i]) +
                                rng.uniform(-amplitude, amplitude));
  return out;
}

}  // namespace

PerturbationSet default_perturbations() {
  PerturbationSet set;
  set.push_back({"gaussian_0.05", [](const Tensor& x, Rng& rng) {
                   return add_gaussian(x, rng, 0.05);
                 }});
  set.push_back({"gaussian_0.10", [](const Tensor& x, Rng& rng) {
                   return add_gaussian(x, rng, 0.10);
                 }});
  set.push_back({"mean_blur_3x3",
                 [](const Tensor& x, Rng&) { return mean_blur_3x3(x); }});
  set.push_back({"pixel_jitter_0.05", [](const Tensor& x, Rng& rng) {
                   return add_jitter(x, rng, 0.05);
                 }});
  return set;
}

std::vector<Tensor> generate_third_party(const Tensor& images,
                                         const PerturbationSet& perturbations,
                                         std::uint64_t seed, bool warn) {
  if (images.ndim() != 4)
    throw std::invalid_argument(
        "generate_third_party: expected a {n,c,h,w} batch");
  if (perturbations.empty())
    throw std::invalid_argument("generate_third_party: no perturbations given");
  std::vector<Tensor> out;
  out.reserve(perturbations.size());
  for (const auto& p : perturbations) {
    Rng rng(Rng::derive(seed, p.name));
    Tensor t = p.apply(images, rng);
    if (!t.same_shape(images))
      throw std::runtime_error("generate_third_party: perturbation '" + p.name +
                               "' changed the batch shape");
    if (!t.all_finite())
      throw std::runtime_error("generate_third_party: perturbation '" + p.name +
                               "' produced non-finite values");
    std::int64_t clamped = 0;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      if (t[i] < -1.0f) {
        t[i] = -1.0f;
        ++clamped;
      } else if (t[i] > 1.0f) {
        t[i] = 1.0f;
        ++clamped;
      }
    }
    if (clamped > 0 && warn)
      std::cerr << "note: perturbation '" << p.name << "' pushed " << clamped
                << " values outside [-1, 1]; clamped\n";
    out.push_back(std::move(t));
  }
  return out;
}

double distillation_kl(const Tensor& teacher_logits,
                       const Tensor& student_logits, Tensor* dstudent) {
  if (teacher_logits.ndim() != 2 ||
      !teacher_logits.same_shape(student_logits))
    throw std::invalid_argument(
        "distillation_kl: logits must be {n,classes} and share a shape");
  const int rows = teacher_logits.dim(0);
  const int classes = teacher_logits.dim(1);
  if (rows < 1) throw std::invalid_argument("distillation_kl: empty batch");
  if (dstudent) *dstudent = Tensor({rows, classes});

  std::vector<double> lt(static_cast<std::size_t>(classes));
  std::vector<double> ls(static_cast<std::size_t>(classes));
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const float* trow = teacher_logits.data() +
                        static_cast<std::int64_t>(r) * classes;
    const float* srow = student_logits.data() +
                        static_cast<std::int64_t>(r) * classes;
    double mt = trow[0], ms = srow[0];
    for (int j = 1; j < classes; ++j) {
      mt = std::max(mt, static_cast<double>(trow[j]));
      ms = std::max(ms, static_cast<double>(srow[j]));
    }
    double zt = 0.0, zs = 0.0;
    for (int j = 0; j < classes; ++j) {
      lt[static_cast<std::size_t>(j)] = static_cast<double>(trow[j]) - mt;
      ls[static_cast<std::size_t>(j)] = static_cast<double>(srow[j]) - ms;
      zt += std::exp(lt[static_cast<std::size_t>(j)]);
      zs += std::exp(ls[static_cast<std::size_t>(j)]);
    }
    const double logzt = std::log(zt), logzs = std::log(zs);
    for (int j = 0; j < classes; ++j) {
      const double lpt = lt[static_cast<std::size_t>(j)] - logzt;
      const double lps = ls[static_cast<std::size_t>(j)] - logzs;
      const double p = std::exp(lpt);
      // p == 0 contributes nothing; skipping it avoids 0 * (-inf).
      if (p > 0.0) total += p * (lpt - lps);
      if (dstudent)
        (*dstudent)[static_cast<std::int64_t>(r) * classes + j] =
            static_cast<float>((std::exp(lps) - p) / rows);
    }
  }
  return total / rows;
}

double self_distillation_loss(const VictimModel& victim, const Tensor& clean,
                              const std::vector<Tensor>& perturbed) {
  if (perturbed.empty())
    throw std::invalid_argument("self_distillation_loss: no perturbed copies");
  const Tensor teacher = victim.logits(clean);
  double total = 0.0;
  for (const Tensor& copy : perturbed) {
    if (!copy.same_shape(clean))
      throw std::invalid_argument(
          "self_distillation_loss: perturbed copy shape differs from clean");
    total += distillation_kl(teacher, victim.logits(copy), nullptr);
  }
  return total / static_cast<double>(perturbed.size());
}

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
    throw std::runtime_error("fine-tuning diverged: " + std::string(term) +
                             " is not finite at step " + std::to_string(step));
}

Tensor rows_of(const Tensor& src, const std::vector<int>& idx) {
  const int c = src.dim(1), h = src.dim(2), w = src.dim(3);
  const std::int64_t px = static_cast<std::int64_t>(c) * h * w;
  Tensor out({static_cast<int>(idx.size()), c, h, w});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.data() + idx[i] * px, px,
                out.data() + static_cast<std::int64_t>(i) * px);
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)});
  std::copy_n(a.data(), a.numel(), out.data());
  std::copy_n(b.data(), b.numel(), out.data() + a.numel());
  return out;
}

}  // namespace

FinetuneResult finetune_attack(const VictimModel& victim,
                               const DomainPair& pair,
                               const AttackerDataView& view,
                               const Tensor* disguised,
                               const FinetuneConfig& cfg) {
  const bool ftal = cfg.mode == "ftal";
  const bool rtal = cfg.mode == "rtal";
  const bool transntl = cfg.mode == "transntl";
  const bool plus = cfg.mode == "transntl_plus_jailntl";
  if (!ftal && !rtal && !transntl && !plus)
    throw std::invalid_argument(
        "finetune_attack: unknown mode '" + cfg.mode +
        "' (ftal | rtal | transntl | transntl_plus_jailntl)");
  if (cfg.epochs <= 0)
    throw std::invalid_argument("finetune_attack: epochs must be >= 1");
  if (cfg.batch_size < 2)
    throw std::invalid_argument("finetune_attack: batch_size must be >= 2");
  if (cfg.lr <= 0.0)
    throw std::invalid_argument("finetune_attack: lr must be positive");
  if (cfg.lambda_sd < 0.0 || !std::isfinite(cfg.lambda_sd))
    throw std::invalid_argument("finetune_attack: lambda_sd must be >= 0");
  const VictimConfig& arch = victim.config();
  if (arch.resolution != pair.resolution || arch.channels != pair.channels ||
      arch.class_count != pair.class_count)
    throw std::invalid_argument(
        "finetune_attack: victim architecture does not match pair");
  const SampleSet& auth = view.authorized_subset;
  if (auth.count() < 1 || !auth.labeled())
    throw std::invalid_argument(
        "finetune_attack: the authorized subset must be non-empty and labeled");
  if (plus) {
    if (!disguised || disguised->empty())
      throw std::invalid_argument(
          "finetune_attack: transntl_plus_jailntl needs disguised data");
    if (disguised->ndim() != 4 || disguised->dim(1) != arch.channels ||
        disguised->dim(2) != arch.resolution ||
        disguised->dim(3) != arch.resolution)
      throw std::invalid_argument(
          "finetune_attack: disguised data does not match the victim input shape");
  }

  FinetuneResult result;
  result.model = victim.clone();
  VictimModel& model = result.model;
  if (rtal) {
    Rng head_rng(Rng::derive(cfg.seed, "finetune/head"));
    model.reinit_head(head_rng);
  }
  Adam opt(model.params(), {cfg.lr, 0.9, 0.999, 1e-8});

  const PerturbationSet perturbations = default_perturbations();
  const int copies = static_cast<int>(perturbations.size());
  const bool distill = transntl || plus;
  const auto batches = make_batches(auth.count(), cfg.batch_size, false);
  const int nd = plus ? disguised->dim(0) : 0;

  int global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Shuffled pa(auth.count(),
                      Rng::derive(cfg.seed, "finetune/shuffle_a",
                                  static_cast<std::uint64_t>(epoch)));
    const Shuffled pd(nd, Rng::derive(cfg.seed, "finetune/shuffle_d",
                                      static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < batches.size(); ++s, ++global_step) {
      const std::vector<int> ia = pa.pick(batches[s]);
      const Tensor xa = auth.batch(ia);
      const std::vector<int> ya = auth.labels_for(ia);
      ++result.authorized_batches;

      opt.zero_grads();
      const auto pass = model.forward_train(xa);
      Tensor dlogits;
      const double ce = cross_entropy(pass.logits, ya, &dlogits);
      check_finite(ce, "cross_entropy", global_step);
      model.backward_train(pass, dlogits, nullptr);
      double total = ce;

      if (distill) {
        Tensor clean = xa;
        if (plus) {
          // Unlabeled disguised rows join the distillation batch only; the
          // cross-entropy term never sees them.
          std::vector<int> id(static_cast<std::size_t>(cfg.batch_size));
          for (std::size_t i = 0; i < id.size(); ++i)
            id[i] = pd.order[(s * id.size() + i) % static_cast<std::size_t>(nd)];
          clean = concat_rows(xa, rows_of(*disguised, id));
          ++result.disguised_batches;
        }
        // The current model is its own teacher; targets are recomputed each
        // step and never receive gradients.
        const Tensor teacher = model.logits(clean);
        const auto copies_batch = generate_third_party(
            clean, perturbations,
            Rng::derive(cfg.seed, "finetune/thirdparty",
                        static_cast<std::uint64_t>(global_step)),
            false);
        result.thirdparty_batches += copies;
        double sd_total = 0.0;
        for (const Tensor& copy : copies_batch) {
          const auto spass = model.forward_train(copy);
          Tensor dstudent;
          sd_total += distillation_kl(teacher, spass.logits, &dstudent);
          dstudent.scale(static_cast<float>(cfg.lambda_sd / copies));
          model.backward_train(spass, dstudent, nullptr);
        }
        const double sd = sd_total / copies;
        check_finite(sd, "self_distillation", global_step);
        total += cfg.lambda_sd * sd;
      }

      opt.step();
      epoch_loss += total;
    }
    result.epoch_losses.push_back(epoch_loss /
                                  static_cast<double>(batches.size()));
  }

  result.metrics = evaluate_victim(model, pair);
  return result;
}

}  // namespace ntljb
