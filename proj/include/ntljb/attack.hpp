#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ntljb/disguise.hpp"
#include "ntljb/domains.hpp"
#include "ntljb/mgd.hpp"
#include "ntljb/oracle.hpp"

// End-to-end disguiser training against a sealed oracle and the evaluation
// that follows. Training alternates generator/discriminator updates over the
// unlabeled unauthorized pool and the attacker's small authorized subset;
// guidance through the oracle is active in jailntl mode and absent in
// jailntl_star mode (which never queries during training). Evaluation sends
// every test image through the forward generator before querying, without
// branching on which split it came from.

namespace ntljb {

struct AttackConfig {
  AttackConfig() { zo.probe_count = 8; }  // desk default; estimator op default is 16

  int epochs = 2;
  int batch_size = 5;
  double authorized_fraction = 0.01;  // share of authorized_train the attacker holds
  DisguiseWeights weights;
  DisguiseConfig disguiser;
  ZoConfig zo;
  bool soft_counts = false;
  std::uint64_t seed = 1;
  std::string mode = "jailntl";  // jailntl | jailntl_star
};

struct AttackReport {
  double authorized_before = 0.0;
  double authorized_after = 0.0;
  double unauthorized_before = 0.0;
  double unauthorized_after = 0.0;
  double authorized_delta = 0.0;    // after - before, exact
  double unauthorized_delta = 0.0;  // after - before, exact
  std::uint64_t query_count = 0;    // total on the oracle when the report closed
  std::uint64_t training_queries = 0;
  std::uint64_t evaluation_queries = 0;
  bool integrity_ok = false;
  std::string config_digest;  // filled by the caller that owns the config
  std::uint64_t seed = 0;
  std::string mode;
};

struct TrainedAttack {
  DisguiseEnsemble ensemble;
  std::vector<LossBundle> history;      // one bundle per step
  std::uint64_t training_queries = 0;   // oracle meter delta over training
};

// Runs the training loop. In jailntl_star mode, or whenever both guidance
// weights are zero, no guidance hook is installed, so the oracle is never
// queried and the updates are bitwise identical between the two cases under
// one seed. A non-finite loss aborts with the failing term and the last
// recorded losses in the message.
TrainedAttack train_attack(const AttackerDataView& view, BlackBoxOracle& oracle,
                           const AttackConfig& cfg);

// Disguise-then-query prediction. The batch path and the one-image path
// agree elementwise.
int attack_predict(const Generator& disguiser, BlackBoxOracle& oracle,
                   const Tensor& image);
std::vector<int> attack_predict_batch(const Generator& disguiser,
                                      BlackBoxOracle& oracle,
                                      const Tensor& images);

// Before-accuracies query the oracle on raw test images; after-accuracies
// disguise every test image first. Fills accuracy, delta, query, and
// integrity fields; seed/mode/config_digest stay with the caller.
AttackReport evaluate_attack(const Generator& disguiser, BlackBoxOracle& oracle,
                             const DomainPair& pair);

// Convenience pipeline: carve the attacker's view, seal a fresh oracle over
// the victim, train, evaluate, and stamp seed/mode into the report.
struct AttackRunResult {
  AttackRunResult(TrainedAttack t, AttackReport r)
      : trained(std::move(t)), report(std::move(r)) {}
  TrainedAttack trained;
  AttackReport report;
};
AttackRunResult run_attack(const DomainPair& pair,
                           std::shared_ptr<VictimModel> victim,
                           const AttackConfig& cfg,
                           OracleMode oracle_mode = OracleMode::logits);

// Four matched-seed variants: no guidance, confidence only, balance only,
// both. Each variant gets a fresh oracle over the same victim so its query
// meter starts at zero.
struct AblationEntry {
  std::string name;
  AttackReport report;
};
std::vector<AblationEntry> run_ablation(const DomainPair& pair,
                                        std::shared_ptr<VictimModel> victim,
                                        const AttackConfig& base_cfg);

// Artifact writers. The CSV header is
// step,L_adv,L_adv^r,L_cs,L_cs^r,L_cf,L_ba,L_total; one row per step.
void write_losses_csv(const std::vector<LossBundle>& history,
                      const std::string& path);
// Report serialized as stable-key JSON with seed, mode, digest, and version.
void write_report_json(const AttackReport& report, const std::string& path);

}  // namespace ntljb
