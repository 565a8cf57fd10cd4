#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ntljb/attack.hpp"
#include "ntljb/finetune.hpp"
#include "ntljb/oracle.hpp"
#include "ntljb/victim.hpp"

namespace ntljb {

// One validated configuration document drives every subcommand. Validation
// is schema-by-example: the default document defines the key set and each
// leaf's type, unknown keys and type mismatches are rejected, and missing
// keys take their defaults. The SHA-256 of the canonical serialization
// (sorted keys, no whitespace) is stamped into every artifact a run writes,
// so artifacts from different configurations can never be confused.
class RunConfig {
 public:
  RunConfig();  // all defaults

  static nlohmann::json default_document();
  static RunConfig from_document(const nlohmann::json& doc);
  static RunConfig load_file(const std::string& path);

  // Applies "dotted.path=value". The value is parsed as JSON unless the
  // target leaf is a string, which takes the text verbatim. Only leaves can
  // be overridden, and the result is re-checked against the schema.
  void set_override(const std::string& assignment);

  const nlohmann::json& document() const { return doc_; }
  std::string digest() const;

  std::uint64_t seed() const;
  std::string data_root() const;
  std::string output_root() const;
  std::string pair_name() const;

  // Checkpoint locations; relative paths land under output_root.
  std::string victim_checkpoint_path() const;
  std::string disguiser_checkpoint_path() const;

  // Typed views for the individual modules. The global seed feeds every one
  // of them, so one config line reseeds the whole pipeline.
  VictimConfig victim_arch(const DomainPair& pair) const;
  VictimTrainConfig victim_train() const;
  AttackConfig attack() const;
  OracleMode oracle_mode() const;
  FinetuneConfig finetune() const;
  double finetune_fraction() const;
  bool log_density() const;
  std::vector<double> sweep_lambda_cf() const;
  std::vector<double> sweep_lambda_ba() const;

 private:
  explicit RunConfig(nlohmann::json doc) : doc_(std::move(doc)) {}
  nlohmann::json doc_;
};

}  // namespace ntljb
