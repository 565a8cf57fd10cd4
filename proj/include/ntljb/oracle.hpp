#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ntljb/tensor.hpp"
#include "ntljb/victim.hpp"

// Black-box access to a sealed victim. Sealing disables every gradient
// entry point on the model and records a SHA-256 digest of its parameters,
// so attack code can only observe outputs and anyone can later prove the
// weights never moved. Every call is metered per image and serialized by a
// mutex (the model's inference kernels are already parallel inside).

namespace ntljb {

enum class OracleMode { logits, labels_only };

const char* oracle_mode_name(OracleMode mode);

class BlackBoxOracle {
 public:
  // Takes shared ownership; flips the victim to inference-only and digests
  // its parameters. Mutation through another handle is detectable later via
  // verify_integrity().
  explicit BlackBoxOracle(std::shared_ptr<VictimModel> victim,
                          OracleMode mode = OracleMode::logits);

  // Raw logits, one row per image. Rejects inputs of the wrong shape, with
  // non-finite values, or with pixels outside [-1, 1]. Throws in
  // labels_only mode. Adds one query per image to the meter.
  Tensor query(const Tensor& images);

  // Argmax class per image (lowest index wins ties). Works in both modes.
  // Adds one query per image to the meter.
  std::vector<int> predict_labels(const Tensor& images);

  OracleMode mode() const { return mode_; }
  int class_count() const;
  int resolution() const;
  int channels() const;

  std::uint64_t query_count() const;

  // Digest recorded at seal time.
  const std::string& parameter_digest() const { return digest_; }
  // Recomputes the digest from the live parameters and compares.
  bool verify_integrity() const;

 private:
  void validate(const Tensor& images) const;
  Tensor run_logits(const Tensor& images);

  std::shared_ptr<VictimModel> victim_;
  OracleMode mode_;
  std::string digest_;
  mutable std::mutex mu_;
  std::uint64_t queries_ = 0;
};

}  // namespace ntljb
