#include "ntljb/attack.hpp"

#include <algorithm>
#include <stdexcept>

#include "ntljb/bytes.hpp"
#include "ntljb/version.hpp"
#include "ntljb/victim.hpp"

#include <nlohmann/json.hpp>

namespace ntljb {

using nlohmann::json;

namespace {

void validate_config(const AttackConfig& cfg) {
  if (cfg.epochs < 1)
    throw std::invalid_argument("attack: epochs must be >= 1");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("attack: batch_size must be >= 1");
  if (cfg.mode != "jailntl" && cfg.mode != "jailntl_star")
    throw std::invalid_argument("attack: unknown mode '" + cfg.mode +
                                "' (jailntl | jailntl_star)");
  if (cfg.authorized_fraction <= 0.0 || cfg.authorized_fraction > 1.0)
    throw std::invalid_argument(
        "attack: authorized_fraction must be in (0, 1]");
}

bool guidance_active(const AttackConfig& cfg) {
  return cfg.mode == "jailntl" &&
         (cfg.weights.lambda_cf > 0.0 || cfg.weights.lambda_ba > 0.0);
}

std::string describe_last(const std::vector<LossBundle>& history) {
  if (history.empty()) return "";
  const LossBundle& b = history.back();
  return "; losses at the last completed step: L_adv=" +
         format_double(b.adv) + " L_adv^r=" + format_double(b.adv_r) +
         " L_cs=" + format_double(b.cs) + " L_cs^r=" + format_double(b.cs_r) +
         " L_cf=" + format_double(b.cf) + " L_ba=" + format_double(b.ba) +
         " L_total=" + format_double(b.total);
}

}  // namespace

TrainedAttack train_attack(const AttackerDataView& view, BlackBoxOracle& oracle,
                           const AttackConfig& cfg) {
  validate_config(cfg);
  const SampleSet& pool = view.unauthorized_pool;
  const SampleSet& subset = view.authorized_subset;
  if (subset.count() < 1 || pool.count() < cfg.batch_size)
    throw std::invalid_argument(
        "attack: the data view cannot fill one batch per side");
  if (subset.channels != oracle.channels() ||
      subset.height != oracle.resolution() ||
      pool.channels != oracle.channels() || pool.height != oracle.resolution())
    throw std::invalid_argument("attack: data does not match the oracle");

  const bool mgd = guidance_active(cfg);
  const std::uint64_t start_queries = oracle.query_count();

  TrainedAttack out{
      DisguiseEnsemble(oracle.resolution(), oracle.channels(), cfg.disguiser,
                       Rng::derive(cfg.seed, "attack/ensemble")),
      {},
      0};
  Rng zo_rng(Rng::derive(cfg.seed, "attack/zo"));
  MgdGuidanceConfig guidance{cfg.weights, cfg.zo, cfg.soft_counts};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_u(Rng::derive(cfg.seed, "attack/shuffle_u",
                              static_cast<std::uint64_t>(epoch)));
    Rng shuffle_a(Rng::derive(cfg.seed, "attack/shuffle_a",
                              static_cast<std::uint64_t>(epoch)));
    const std::vector<int> perm_u = shuffle_u.permutation(pool.count());
    const std::vector<int> perm_a = shuffle_a.permutation(subset.count());
    const auto batches = make_batches(pool.count(), cfg.batch_size, true);

    for (std::size_t s = 0; s < batches.size(); ++s) {
      std::vector<int> iu;
      iu.reserve(batches[s].size());
      for (int i : batches[s]) iu.push_back(perm_u[static_cast<std::size_t>(i)]);
      // The small authorized subset cycles: consecutive positions in the
      // per-epoch permutation, wrapped modulo its size.
      std::vector<int> ia(static_cast<std::size_t>(cfg.batch_size));
      for (int i = 0; i < cfg.batch_size; ++i)
        ia[static_cast<std::size_t>(i)] =
            perm_a[(s * static_cast<std::size_t>(cfg.batch_size) +
                    static_cast<std::size_t>(i)) %
                   perm_a.size()];

      const Tensor xu = pool.batch(iu);
      const Tensor xa = subset.batch(ia);
      MgdHook hook;
      if (mgd) hook = make_mgd_hook(oracle, xa, guidance, zo_rng);
      try {
        out.history.push_back(
            minmax_step(out.ensemble, xa, xu, cfg.weights, hook));
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(e.what() + describe_last(out.history));
      }
    }
  }
  out.training_queries = oracle.query_count() - start_queries;
  return out;
}

std::vector<int> attack_predict_batch(const Generator& disguiser,
                                      BlackBoxOracle& oracle,
                                      const Tensor& images) {
  return oracle.predict_labels(disguiser.infer(images));
}

int attack_predict(const Generator& disguiser, BlackBoxOracle& oracle,
                   const Tensor& image) {
  if (image.ndim() != 4 || image.dim(0) != 1)
    throw std::invalid_argument("attack_predict: expected a single 1xCxHxW image");
  return attack_predict_batch(disguiser, oracle, image)[0];
}

AttackReport evaluate_attack(const Generator& disguiser, BlackBoxOracle& oracle,
                             const DomainPair& pair) {
  const std::uint64_t start_queries = oracle.query_count();
  auto raw = [&oracle](const Tensor& x) { return oracle.predict_labels(x); };
  auto disguised = [&](const Tensor& x) {
    return attack_predict_batch(disguiser, oracle, x);
  };
  AttackReport r;
  r.authorized_before = eval_accuracy(raw, pair.authorized_test);
  r.unauthorized_before = eval_accuracy(raw, pair.unauthorized_test);
  r.authorized_after = eval_accuracy(disguised, pair.authorized_test);
  r.unauthorized_after = eval_accuracy(disguised, pair.unauthorized_test);
  r.authorized_delta = r.authorized_after - r.authorized_before;
  r.unauthorized_delta = r.unauthorized_after - r.unauthorized_before;
  r.evaluation_queries = oracle.query_count() - start_queries;
  r.query_count = oracle.query_count();
  r.integrity_ok = oracle.verify_integrity();
  return r;
}

AttackRunResult run_attack(const DomainPair& pair,
                           std::shared_ptr<VictimModel> victim,
                           const AttackConfig& cfg, OracleMode oracle_mode) {
  validate_config(cfg);
  const AttackerDataView view =
      take_authorized_subset(pair, cfg.authorized_fraction, cfg.seed);
  BlackBoxOracle oracle(std::move(victim), oracle_mode);
  TrainedAttack trained = train_attack(view, oracle, cfg);
  AttackReport report =
      evaluate_attack(trained.ensemble.to_authorized, oracle, pair);
  report.training_queries = trained.training_queries;
  report.seed = cfg.seed;
  report.mode = cfg.mode;
  return AttackRunResult(std::move(trained), std::move(report));
}

std::vector<AblationEntry> run_ablation(const DomainPair& pair,
                                        std::shared_ptr<VictimModel> victim,
                                        const AttackConfig& base_cfg) {
  struct Variant {
    const char* name;
    const char* mode;
    bool cf, ba;
  };
  const Variant variants[] = {{"jailntl_star", "jailntl_star", false, false},
                              {"jailntl_cf", "jailntl", true, false},
                              {"jailntl_ba", "jailntl", false, true},
                              {"jailntl_full", "jailntl", true, true}};
  std::vector<AblationEntry> out;
  for (const Variant& v : variants) {
    AttackConfig cfg = base_cfg;
    cfg.mode = v.mode;
    if (!v.cf) cfg.weights.lambda_cf = 0.0;
    if (!v.ba) cfg.weights.lambda_ba = 0.0;
    AttackRunResult run = run_attack(pair, victim, cfg);
    out.push_back({v.name, std::move(run.report)});
  }
  return out;
}

void write_losses_csv(const std::vector<LossBundle>& history,
                      const std::string& path) {
  std::string csv = "step,L_adv,L_adv^r,L_cs,L_cs^r,L_cf,L_ba,L_total\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const LossBundle& b = history[i];
    csv += std::to_string(i);
    for (double v : {b.adv, b.adv_r, b.cs, b.cs_r, b.cf, b.ba, b.total}) {
      csv += ',';
      csv += format_double(v);
    }
    csv += '\n';
  }
  write_text_file(path, csv);
}

void write_report_json(const AttackReport& report, const std::string& path) {
  json j;
  j["authorized_acc_before"] = report.authorized_before;
  j["authorized_acc_after"] = report.authorized_after;
  j["unauthorized_acc_before"] = report.unauthorized_before;
  j["unauthorized_acc_after"] = report.unauthorized_after;
  j["authorized_delta"] = report.authorized_delta;
  j["unauthorized_delta"] = report.unauthorized_delta;
  j["query_count"] = report.query_count;
  j["training_queries"] = report.training_queries;
  j["evaluation_queries"] = report.evaluation_queries;
  j["integrity_ok"] = report.integrity_ok;
  j["config_digest"] = report.config_digest;
  j["seed"] = report.seed;
  j["mode"] = report.mode;
  j["version"] = kVersion;
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace ntljb
