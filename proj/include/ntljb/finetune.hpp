#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ntljb/domains.hpp"
#include "ntljb/tensor.hpp"
#include "ntljb/victim.hpp"

// White-box fine-tuning attacks. This module deliberately works on a
// trainable victim copy and never takes a sealed oracle: it models the
// attacker who stole the weights. Four recipes:
//   ftal      fine-tune all layers on the small authorized subset
//   rtal      re-initialize the classifier head first, then as ftal
//   transntl  ftal plus self-distillation across perturbed third-party
//             copies of each authorized batch (impairment repair)
//   transntl_plus_jailntl  transntl with disguised unauthorized images
//             mixed into the self-distillation term (unlabeled)

namespace ntljb {

struct Perturbation {
  std::string name;
  // Maps a [-1,1] image batch to a same-shape batch; draws randomness only
  // from the passed stream.
  std::function<Tensor(const Tensor&, Rng&)> apply;
};
using PerturbationSet = std::vector<Perturbation>;

// Gaussian noise (sigma 0.05 and 0.1), 3x3 mean blur, per-pixel jitter
// within +/-0.05. All outputs clamped to [-1, 1].
PerturbationSet default_perturbations();

// One perturbed copy of the batch per perturbation, seeded per entry name,
// so regeneration under the same seed is identical. Outputs that leave
// [-1, 1] are clamped; when warn is set a note goes to stderr.
std::vector<Tensor> generate_third_party(const Tensor& images,
                                         const PerturbationSet& perturbations,
                                         std::uint64_t seed, bool warn = true);

// Mean KL between teacher and student softmax rows, teacher detached.
// dstudent (optional) receives d/d(student_logits).
double distillation_kl(const Tensor& teacher_logits,
                       const Tensor& student_logits, Tensor* dstudent);

// Self-distillation value: the victim's predictions on the clean batch act
// as detached teacher targets for every perturbed copy; single mean over
// all (sample, perturbation) pairs. Zero when predictions agree exactly.
double self_distillation_loss(const VictimModel& victim, const Tensor& clean,
                              const std::vector<Tensor>& perturbed);

struct FinetuneConfig {
  std::string mode = "transntl";  // ftal | rtal | transntl | transntl_plus_jailntl
  double lambda_sd = 1.0;
  int epochs = 20;
  int batch_size = 16;
  double lr = 1e-4;
  std::uint64_t seed = 1;
};

struct FinetuneResult {
  VictimModel model;
  VictimMetrics metrics;
  std::vector<double> epoch_losses;
  // Data-access meters: batches materialized from each source. The two
  // plain fine-tuning recipes must never touch disguised data.
  std::int64_t authorized_batches = 0;
  std::int64_t thirdparty_batches = 0;
  std::int64_t disguised_batches = 0;
};

// Fine-tunes a clone of the victim on the attacker's authorized subset.
// disguised may be null except in transntl_plus_jailntl mode, where it
// holds forward-generator outputs for the unauthorized pool (unlabeled).
// Throws on divergence, naming the offending term.
FinetuneResult finetune_attack(const VictimModel& victim,
                               const DomainPair& pair,
                               const AttackerDataView& view,
                               const Tensor* disguised,
                               const FinetuneConfig& cfg);

}  // namespace ntljb
