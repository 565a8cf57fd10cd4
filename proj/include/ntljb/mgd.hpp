#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ntljb/disguise.hpp"
#include "ntljb/oracle.hpp"
#include "ntljb/rng.hpp"
#include "ntljb/tensor.hpp"

// Output-statistic matching losses and the zero-order gradient estimator
// that drives them through the sealed oracle. The disguiser is steered to
// make the victim as confident and as class-balanced on disguised images as
// it is on authorized ones, using only forward queries.

namespace ntljb {

// Softmax entropy of one logit row, in [0, log C]; 0 log 0 := 0.
double prediction_entropy(const float* logits, int count);
double prediction_entropy(const std::vector<float>& logits);

// Largest raw logit (diagnostic confidence measure).
double max_logit_confidence(const float* logits, int count);
double max_logit_confidence(const std::vector<float>& logits);

// Softmax entropy of every row of an n x C logit matrix.
std::vector<double> row_entropies(const Tensor& logits);

// Mean absolute difference between per-row entropies, paired by batch
// position. Batches must have equal size and class count.
double confidence_loss(const Tensor& logits_a, const Tensor& logits_d);

struct ClassDistribution {
  std::vector<double> p;  // non-negative, sums to 1
  int sample_count = 0;
  int classes() const { return static_cast<int>(p.size()); }
};

// Hard label histogram P(i) = n_i / N.
ClassDistribution class_distribution(const std::vector<int>& labels,
                                     int class_count);
// Soft variant: per-class softmax-probability mass / N. Lower-variance
// input to the zero-order estimator than hard counts.
ClassDistribution soft_class_distribution(const Tensor& logits);

// Entropy of a class distribution, in [0, log C]; 0 log 0 := 0.
double balance_entropy(const ClassDistribution& dist);

// |balance_entropy(disguised) - balance_entropy(authorized)|.
double class_balance_loss(const ClassDistribution& disguised,
                          const ClassDistribution& authorized);

// Closed-form gradients of the guidance losses w.r.t. the disguised logits,
// authorized statistics held fixed. The attack can only estimate these
// through the sealed oracle; white-box tests check the estimator and the
// loss implementations against them.
Tensor confidence_loss_grad(const Tensor& logits_d, const Tensor& logits_a);
// Soft-count balance only: the hard-count distribution is piecewise
// constant in the logits, so it has no useful gradient.
Tensor class_balance_loss_grad(const Tensor& logits_d,
                               const ClassDistribution& authorized);

// did + lambda_cf * l_cf + lambda_ba * l_ba; rejects non-finite terms.
double total_loss(double did, double l_cf, double l_ba,
                  const DisguiseWeights& weights);

// ---- zero-order gradients ----

enum class ZoScheme { random_spherical, coordinate_subset };

struct ZoConfig {
  int probe_count = 16;  // K; every estimate costs exactly 2K evaluations
  double step = 0.05;    // h, in [-1, 1] pixel units
  ZoScheme scheme = ZoScheme::random_spherical;
};

// Estimates d loss / d images from 2K forward evaluations of a black-box
// scalar. random_spherical: antithetic unit directions, each difference
// quotient scaled by the tensor dimensionality. coordinate_subset: plain
// central differences on K distinct coordinates (K <= numel), zeros
// elsewhere. Throws if any evaluation is non-finite.
Tensor zo_gradient(const std::function<double(const Tensor&)>& loss,
                   const Tensor& images, const ZoConfig& cfg, Rng& rng);

// ---- oracle-driven guidance hook ----

struct MgdGuidanceConfig {
  DisguiseWeights weights;  // lambda_cf / lambda_ba are used here
  ZoConfig zo;
  bool soft_counts = false;  // soft class distribution (logits mode only)
};

// Builds the per-step guidance callback for minmax_step. The hook fixes the
// authorized batch statistics with one oracle query, then estimates
// d(lambda_cf * L_cf + lambda_ba * L_ba) / d(disguised) with zero-order
// probes; probed copies are clamped to [-1, 1] before querying. On a
// labels-only oracle the confidence term is disabled and the balance term
// falls back to hard counts. Queries per invocation: (2 + 2K) * batch rows.
// batch_a is copied; oracle and rng must outlive the hook.
MgdHook make_mgd_hook(BlackBoxOracle& oracle, const Tensor& batch_a,
                      const MgdGuidanceConfig& cfg, Rng& rng);

// Closed-form query meter for one guidance invocation (images, not batches).
std::uint64_t mgd_queries_per_step(int batch_rows, int probe_count);

}  // namespace ntljb
