#include "ntljb/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace ntljb {

const char* oracle_mode_name(OracleMode mode) {
  return mode == OracleMode::logits ? "logits" : "labels_only";
}

BlackBoxOracle::BlackBoxOracle(std::shared_ptr<VictimModel> victim,
                               OracleMode mode)
    : victim_(std::move(victim)), mode_(mode) {
  if (!victim_) throw std::invalid_argument("oracle: null victim");
  victim_->set_grads_enabled(false);
  digest_ = victim_->parameter_digest();
}

int BlackBoxOracle::class_count() const { return victim_->class_count(); }
int BlackBoxOracle::resolution() const { return victim_->resolution(); }
int BlackBoxOracle::channels() const { return victim_->config().channels; }

void BlackBoxOracle::validate(const Tensor& images) const {
  const auto& cfg = victim_->config();
  if (images.ndim() != 4 || images.dim(1) != cfg.channels ||
      images.dim(2) != cfg.resolution || images.dim(3) != cfg.resolution)
    throw std::invalid_argument("oracle: query shape " + images.shape_str() +
                                " does not match sealed model (channels=" +
                                std::to_string(cfg.channels) + ", resolution=" +
                                std::to_string(cfg.resolution) + ")");
  if (images.dim(0) < 1)
    throw std::invalid_argument("oracle: empty query batch");
  const float* p = images.data();
  for (std::int64_t i = 0; i < images.numel(); ++i) {
    if (!std::isfinite(p[i]))
      throw std::invalid_argument("oracle: query contains a non-finite pixel");
    if (p[i] < -1.0f || p[i] > 1.0f)
      throw std::invalid_argument(
          "oracle: query pixel outside [-1, 1]; clamp inputs before querying");
  }
}

Tensor BlackBoxOracle::run_logits(const Tensor& images) {
  validate(images);
  Tensor z = victim_->logits(images);
  queries_ += static_cast<std::uint64_t>(images.dim(0));
  return z;
}

Tensor BlackBoxOracle::query(const Tensor& images) {
  std::lock_guard<std::mutex> lock(mu_);
  if (mode_ != OracleMode::logits)
    throw std::logic_error(
        "oracle: logits are unavailable, this oracle is sealed labels-only");
  return run_logits(images);
}

std::vector<int> BlackBoxOracle::predict_labels(const Tensor& images) {
  std::lock_guard<std::mutex> lock(mu_);
  const Tensor z = run_logits(images);
  const int n = z.dim(0), c = z.dim(1);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    const float* row = z.data() + static_cast<std::int64_t>(r) * c;
    int best = 0;
    for (int i = 1; i < c; ++i)
      if (row[i] > row[best]) best = i;
    labels[static_cast<std::size_t>(r)] = best;
  }
  return labels;
}

std::uint64_t BlackBoxOracle::query_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return queries_;
}

bool BlackBoxOracle::verify_integrity() const {
  std::lock_guard<std::mutex> lock(mu_);
  return victim_->parameter_digest() == digest_;
}

}  // namespace ntljb
