#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ntljb/adam.hpp"
#include "ntljb/domains.hpp"
#include "ntljb/layers.hpp"
#include "ntljb/tensor.hpp"

// Victim classifiers and their trainers. Three recipes share one backbone:
//   supervised  plain cross-entropy on the authorized domain
//   ntl         cross-entropy plus terms that push unauthorized-domain
//               predictions away from their labels (clamped KL) and pull the
//               two domains' features apart (clamped RBF-kernel MMD)
//   cuti        cross-entropy plus the KL push on both the raw unauthorized
//               batch and a style-mixed variant (unauthorized content
//               re-dressed with authorized per-channel feature statistics)

namespace ntljb {

struct VictimConfig {
  std::vector<int> widths = {12, 24, 48};
  int class_count = 10;
  int resolution = 32;
  int channels = 3;
  int style_mix_layer = 8;  // net index where cuti mixes feature maps
};

struct VictimTrainConfig {
  std::string method = "ntl";  // supervised | ntl | cuti
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  double lambda_kl = 1.0;
  double kl_clamp = 2.0;
  double lambda_mmd = 0.25;
  double mmd_clamp = 1.0;
  double label_smoothing = 0.1;
  double style_mix_weight = 0.5;  // cuti mixing strength in (0, 1]
  std::uint64_t seed = 1;
};

struct VictimMetrics {
  double authorized_acc = 0.0;    // percent
  double unauthorized_acc = 0.0;  // percent
};

class VictimModel {
 public:
  VictimModel() = default;
  VictimModel(const VictimConfig& cfg, std::uint64_t init_seed);

  const VictimConfig& config() const { return cfg_; }
  int class_count() const { return cfg_.class_count; }
  int resolution() const { return cfg_.resolution; }

  // Inference path; never touches gradients.
  Tensor logits(const Tensor& images) const;

  // Training path. The tape holds all layer caches, aligned with net
  // indices; features are the pooled activations feeding the final linear.
  struct TrainPass {
    Tape tape;
    Tensor features;
    Tensor logits;
  };
  TrainPass forward_train(const Tensor& images) const;
  // dfeatures may be null; parameter gradients are accumulated.
  void backward_train(const TrainPass& pass, const Tensor& dlogits,
                      const Tensor* dfeatures);

  // Split-path access for the style-mixing trainer: front = layers before
  // the mix point, rest = everything after (through the classifier head).
  Tensor forward_front(const Tensor& images, Tape& tape) const;
  struct RestPass {
    Tape tape;
    Tensor logits;
  };
  RestPass forward_rest(const Tensor& feature_map) const;
  Tensor backward_rest(const RestPass& pass, const Tensor& dlogits);
  void backward_front(const Tape& tape, const Tensor& dfeature_map);

  // Fresh trainable copy with identical parameter values.
  VictimModel clone() const;

  std::vector<Param*> params() { return net_.params(); }
  void zero_grads() { net_.zero_grads(); }
  std::int64_t parameter_count() { return net_.parameter_count(); }
  std::string parameter_digest() const;

  // When disabled, every backward entry point throws; inference and the
  // parameter digest keep working. The sealed oracle relies on this.
  void set_grads_enabled(bool enabled) { grads_enabled_ = enabled; }
  bool grads_enabled() const { return grads_enabled_; }

  void reinit_head(Rng& rng);

 private:
  void require_grads() const;

  VictimConfig cfg_;
  Net net_;
  bool grads_enabled_ = true;
};

// ---- losses (shared with the attack modules) ----

// Numerically stable row softmax; max-shifted, accumulated in double.
Tensor softmax_rows(const Tensor& logits);

// Mean cross-entropy over the batch; dlogits (optional) gets (p - y)/n.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Tensor* dlogits);

// Mean over rows of min(KL(softmax(z) || smoothed_onehot(y)), clamp);
// clamped rows contribute zero gradient.
double kl_to_smoothed(const Tensor& logits, const std::vector<int>& labels,
                      double smoothing, double clamp, Tensor* dlogits);

// Biased RBF-kernel MMD^2 between feature rows; bandwidth = median pooled
// pairwise squared distance (detached, fallback 1 when degenerate).
double mmd_rbf(const Tensor& feat_a, const Tensor& feat_u, Tensor* grad_a,
               Tensor* grad_u);

// Forward-only objective values on one paired batch; no gradients. Exposed
// so tests can compare trainer objectives without running optimizer steps.
struct BatchLossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double kl_u = 0.0;
  double kl_mixed = 0.0;  // style-mix recipe only
  double mmd = 0.0;       // ntl recipe only
};
BatchLossBreakdown ntl_batch_loss(const VictimModel& model, const Tensor& xa,
                                  const std::vector<int>& ya, const Tensor& xu,
                                  const std::vector<int>& yu,
                                  const VictimTrainConfig& cfg);
BatchLossBreakdown cuti_batch_loss(const VictimModel& model, const Tensor& xa,
                                   const std::vector<int>& ya, const Tensor& xu,
                                   const std::vector<int>& yu,
                                   const VictimTrainConfig& cfg);

// ---- training / evaluation ----

struct VictimTrainResult {
  VictimModel model;
  VictimMetrics metrics;
  std::vector<double> epoch_losses;
};

VictimTrainResult train_victim(const DomainPair& pair,
                               const VictimConfig& arch,
                               const VictimTrainConfig& cfg);

VictimMetrics evaluate_victim(const VictimModel& model, const DomainPair& pair);

// Accuracy in percent of a generic predictor over a labeled set.
double eval_accuracy(
    const std::function<std::vector<int>(const Tensor&)>& predict,
    const SampleSet& set, int batch_size = 64);

// ---- checkpoints ----

void save_victim(const VictimModel& model, const std::string& path,
                 const std::string& provenance_json);
struct LoadedVictim {
  VictimModel model;
  std::string provenance_json;
};
LoadedVictim load_victim(const std::string& path);

}  // namespace ntljb
