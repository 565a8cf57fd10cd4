#include <CLI11.hpp>

#include <cstring>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "ntljb/attack.hpp"
#include "ntljb/bytes.hpp"
#include "ntljb/config.hpp"
#include "ntljb/diagnostics.hpp"
#include "ntljb/finetune.hpp"
#include "ntljb/version.hpp"

namespace {

using namespace ntljb;
using nlohmann::json;

std::shared_ptr<VictimModel> load_victim_shared(const std::string& path) {
  if (!file_exists(path))
    throw std::runtime_error("victim checkpoint not found: " + path +
                             " (run `ntljb pretrain` first)");
  LoadedVictim loaded = load_victim(path);
  return std::make_shared<VictimModel>(std::move(loaded.model));
}

json stamp(const RunConfig& cfg) {
  return json{{"seed", cfg.seed()},
              {"config_digest", cfg.digest()},
              {"version", kVersion}};
}

void write_json(const json& j, const std::string& path) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string pct(double v) { return format_double(v) + "%"; }

// Pushes a whole split through the forward generator in bounded chunks.
Tensor disguise_split(const Generator& gen, const SampleSet& set) {
  const int n = set.count();
  Tensor out({n, set.channels, set.height, set.width});
  const std::int64_t px = set.pixels_per_image();
  constexpr int kChunk = 64;
  for (int first = 0; first < n; first += kChunk) {
    const int take = std::min(kChunk, n - first);
    const Tensor y = gen.infer(set.batch_range(first, take));
    std::memcpy(out.data() + first * px, y.data(),
                static_cast<std::size_t>(take * px) * sizeof(float));
  }
  return out;
}

int cmd_pretrain(const RunConfig& cfg) {
  const DomainPair pair = load_domain_pair(cfg.pair_name(), cfg.data_root());
  const VictimTrainConfig train_cfg = cfg.victim_train();
  const VictimTrainResult result =
      train_victim(pair, cfg.victim_arch(pair), train_cfg);

  ensure_dir(cfg.output_root());
  json prov = stamp(cfg);
  prov["method"] = train_cfg.method;
  prov["pair"] = cfg.pair_name();
  prov["authorized_acc"] = result.metrics.authorized_acc;
  prov["unauthorized_acc"] = result.metrics.unauthorized_acc;
  save_victim(result.model, cfg.victim_checkpoint_path(), prov.dump());

  json summary = prov;
  summary["checkpoint"] = cfg.victim_checkpoint_path();
  summary["epoch_losses"] = result.epoch_losses;
  write_json(summary, cfg.output_root() + "/pretrain_metrics.json");

  std::cout << train_cfg.method << " victim on " << cfg.pair_name()
            << ": authorized " << pct(result.metrics.authorized_acc)
            << ", unauthorized " << pct(result.metrics.unauthorized_acc)
            << "\ncheckpoint: " << cfg.victim_checkpoint_path() << "\n";
  return 0;
}

int cmd_seal_check(const RunConfig& cfg) {
  auto victim = load_victim_shared(cfg.victim_checkpoint_path());
  BlackBoxOracle oracle(victim, OracleMode::logits);
  const int c = oracle.channels(), r = oracle.resolution();

  Tensor probe({1, c, r, r});
  const Tensor logits = oracle.query(probe);

  bool rejects_range = false;
  try {
    Tensor bad = probe;
    bad.fill(2.0f);
    oracle.query(bad);
  } catch (const std::invalid_argument&) {
    rejects_range = true;
  }
  bool rejects_shape = false;
  try {
    oracle.query(Tensor({1, c, r, r + 1}));
  } catch (const std::invalid_argument&) {
    rejects_shape = true;
  }
  BlackBoxOracle sealed_labels(victim, OracleMode::labels_only);
  bool labels_only_blocks_logits = false;
  try {
    sealed_labels.query(probe);
  } catch (const std::logic_error&) {
    labels_only_blocks_logits = true;
  }
  const bool labels_work = !sealed_labels.predict_labels(probe).empty();

  json report = stamp(cfg);
  report["parameter_digest"] = oracle.parameter_digest();
  report["integrity_ok"] = oracle.verify_integrity();
  report["gradients_disabled"] = !victim->grads_enabled();
  report["rejects_out_of_range"] = rejects_range;
  report["rejects_bad_shape"] = rejects_shape;
  report["labels_only_blocks_logits"] = labels_only_blocks_logits;
  report["labels_only_predicts"] = labels_work;
  report["class_count"] = logits.dim(1);
  report["query_count"] = oracle.query_count();
  ensure_dir(cfg.output_root());
  write_json(report, cfg.output_root() + "/seal_report.json");

  const bool all_good = report["integrity_ok"].get<bool>() &&
                        report["gradients_disabled"].get<bool>() &&
                        rejects_range && rejects_shape &&
                        labels_only_blocks_logits && labels_work;
  std::cout << "seal " << (all_good ? "ok" : "BROKEN") << ", digest "
            << oracle.parameter_digest() << "\n";
  return all_good ? 0 : 1;
}

int cmd_attack(const RunConfig& cfg) {
  const DomainPair pair = load_domain_pair(cfg.pair_name(), cfg.data_root());
  auto victim = load_victim_shared(cfg.victim_checkpoint_path());
  const AttackConfig acfg = cfg.attack();

  AttackRunResult run = run_attack(pair, victim, acfg, cfg.oracle_mode());
  run.report.config_digest = cfg.digest();

  const std::string dir = cfg.output_root() + "/attack_" + acfg.mode;
  ensure_dir(dir);
  write_report_json(run.report, dir + "/report.json");
  write_losses_csv(run.trained.history, dir + "/losses.csv");
  save_ensemble(run.trained.ensemble, cfg.disguiser_checkpoint_path());

  const AttackReport& rep = run.report;
  std::cout << acfg.mode << " on " << cfg.pair_name() << ": unauthorized "
            << pct(rep.unauthorized_before) << " -> "
            << pct(rep.unauthorized_after) << ", authorized "
            << pct(rep.authorized_before) << " -> "
            << pct(rep.authorized_after) << "\ntraining queries "
            << rep.training_queries << ", evaluation queries "
            << rep.evaluation_queries << ", integrity "
            << (rep.integrity_ok ? "ok" : "BROKEN") << "\nreport: " << dir
            << "/report.json\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  const DomainPair pair = load_domain_pair(cfg.pair_name(), cfg.data_root());
  auto victim = load_victim_shared(cfg.victim_checkpoint_path());

  std::vector<AblationEntry> entries =
      run_ablation(pair, victim, cfg.attack());
  const std::string dir = cfg.output_root() + "/ablation";
  ensure_dir(dir);
  std::string csv =
      "variant,authorized_before,authorized_after,unauthorized_before,"
      "unauthorized_after,training_queries,query_count,seed,config_digest,"
      "version\n";
  for (AblationEntry& e : entries) {
    e.report.config_digest = cfg.digest();
    write_report_json(e.report, dir + "/" + e.name + "_report.json");
    csv += e.name + "," + format_double(e.report.authorized_before) + "," +
           format_double(e.report.authorized_after) + "," +
           format_double(e.report.unauthorized_before) + "," +
           format_double(e.report.unauthorized_after) + "," +
           std::to_string(e.report.training_queries) + "," +
           std::to_string(e.report.query_count) + "," +
           std::to_string(cfg.seed()) + "," + cfg.digest() + "," + kVersion +
           "\n";
    std::cout << e.name << ": unauthorized "
              << pct(e.report.unauthorized_before) << " -> "
              << pct(e.report.unauthorized_after) << " ("
              << e.report.training_queries << " training queries)\n";
  }
  write_text_file(dir + "/summary.csv", csv);
  std::cout << "summary: " << dir << "/summary.csv\n";
  return 0;
}

int cmd_finetune(const RunConfig& cfg) {
  const DomainPair pair = load_domain_pair(cfg.pair_name(), cfg.data_root());
  LoadedVictim loaded = load_victim(cfg.victim_checkpoint_path());
  const FinetuneConfig fcfg = cfg.finetune();
  const AttackerDataView view =
      take_authorized_subset(pair, cfg.finetune_fraction(), cfg.seed());

  Tensor disguised;
  const Tensor* disguised_ptr = nullptr;
  if (fcfg.mode == "transntl_plus_jailntl") {
    const std::string dpath = cfg.disguiser_checkpoint_path();
    if (!file_exists(dpath))
      throw std::runtime_error("disguiser checkpoint not found: " + dpath +
                               " (run `ntljb attack` first)");
    DisguiseEnsemble ens = load_ensemble(dpath);
    disguised = disguise_split(ens.to_authorized, view.unauthorized_pool);
    disguised_ptr = &disguised;
  }

  const VictimMetrics before = evaluate_victim(loaded.model, pair);
  FinetuneResult result =
      finetune_attack(loaded.model, pair, view, disguised_ptr, fcfg);

  json report = stamp(cfg);
  report["mode"] = fcfg.mode;
  report["lambda_sd"] = fcfg.lambda_sd;
  report["authorized_before"] = before.authorized_acc;
  report["authorized_after"] = result.metrics.authorized_acc;
  report["unauthorized_before"] = before.unauthorized_acc;
  report["unauthorized_after"] = result.metrics.unauthorized_acc;
  report["authorized_batches"] = result.authorized_batches;
  report["thirdparty_batches"] = result.thirdparty_batches;
  report["disguised_batches"] = result.disguised_batches;
  report["epoch_losses"] = result.epoch_losses;

  const std::string dir = cfg.output_root() + "/finetune_" + fcfg.mode;
  ensure_dir(dir);
  write_json(report, dir + "/report.json");
  save_victim(result.model, dir + "/finetuned.ckpt", report.dump());

  std::cout << fcfg.mode << ": unauthorized " << pct(before.unauthorized_acc)
            << " -> " << pct(result.metrics.unauthorized_acc)
            << ", authorized " << pct(before.authorized_acc) << " -> "
            << pct(result.metrics.authorized_acc) << "\nreport: " << dir
            << "/report.json\n";
  return 0;
}

int cmd_diagnose(const RunConfig& cfg) {
  const DomainPair pair = load_domain_pair(cfg.pair_name(), cfg.data_root());
  auto victim = load_victim_shared(cfg.victim_checkpoint_path());
  BlackBoxOracle oracle(victim, OracleMode::logits);

  std::vector<DomainStats> stats;
  stats.push_back(collect_stats(oracle, pair.authorized_test, "authorized"));
  stats.push_back(
      collect_stats(oracle, pair.unauthorized_test, "unauthorized"));
  const std::string dpath = cfg.disguiser_checkpoint_path();
  if (file_exists(dpath)) {
    DisguiseEnsemble ens = load_ensemble(dpath);
    const Tensor disguised =
        disguise_split(ens.to_authorized, pair.unauthorized_test);
    stats.push_back(collect_stats(oracle, disguised, "disguised"));
  }

  const std::string dir = cfg.output_root() + "/stats";
  export_stats(stats, dir, cfg.log_density());

  json summary = stamp(cfg);
  summary["query_count"] = oracle.query_count();
  for (const DomainStats& s : stats) {
    summary[s.tag] = {{"samples", s.sample_count()},
                      {"mean_entropy", s.mean_entropy()},
                      {"balance_entropy", s.balance_entropy()},
                      {"proportions", s.proportions}};
    std::cout << s.tag << ": mean entropy "
              << format_double(s.mean_entropy()) << ", balance entropy "
              << format_double(s.balance_entropy()) << " over "
              << s.sample_count() << " samples\n";
  }
  write_json(summary, dir + "/summary.json");
  std::cout << "stats: " << dir << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const std::vector<double> cfs = cfg.sweep_lambda_cf();
  const std::vector<double> bas = cfg.sweep_lambda_ba();
  if (cfs.empty() || bas.empty())
    throw std::invalid_argument("sweep: the lambda grids must not be empty");

  const DomainPair pair = load_domain_pair(cfg.pair_name(), cfg.data_root());
  auto victim = load_victim_shared(cfg.victim_checkpoint_path());

  std::string csv =
      "lambda_cf,lambda_ba,authorized_before,authorized_after,"
      "unauthorized_before,unauthorized_after,authorized_delta,"
      "unauthorized_delta,training_queries,query_count,seed,config_digest,"
      "version\n";
  for (double cf : cfs)
    for (double ba : bas) {
      AttackConfig acfg = cfg.attack();
      acfg.weights.lambda_cf = cf;
      acfg.weights.lambda_ba = ba;
      const AttackRunResult run =
          run_attack(pair, victim, acfg, cfg.oracle_mode());
      const AttackReport& r = run.report;
      csv += format_double(cf) + "," + format_double(ba) + "," +
             format_double(r.authorized_before) + "," +
             format_double(r.authorized_after) + "," +
             format_double(r.unauthorized_before) + "," +
             format_double(r.unauthorized_after) + "," +
             format_double(r.authorized_delta) + "," +
             format_double(r.unauthorized_delta) + "," +
             std::to_string(r.training_queries) + "," +
             std::to_string(r.query_count) + "," + std::to_string(cfg.seed()) +
             "," + cfg.digest() + "," + kVersion + "\n";
      std::cout << "lambda_cf=" << format_double(cf)
                << " lambda_ba=" << format_double(ba) << ": unauthorized "
                << pct(r.unauthorized_before) << " -> "
                << pct(r.unauthorized_after) << "\n";
    }
  ensure_dir(cfg.output_root());
  write_text_file(cfg.output_root() + "/sweep.csv", csv);
  std::cout << "sweep: " << cfg.output_root() << "/sweep.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Non-transferable-learning victims, a sealed black-box oracle, and "
      "the attacks that break the barrier"};
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path, data_root;
  std::vector<std::string> overrides;
  bool dry_run = false;
  app.add_option("--config", config_path,
                 "JSON configuration file (defaults apply when omitted)");
  app.add_option("--set", overrides,
                 "Override one config key (section.key=value); repeatable");
  app.add_option("--data-root", data_root,
                 "Dataset cache root (else NTLJB_DATA_ROOT, else ./data)");
  app.add_flag("--dry-run", dry_run,
               "Validate the configuration, print its digest, and exit");
  app.require_subcommand(1);

  CLI::App* c_pretrain =
      app.add_subcommand("pretrain", "Train a victim classifier and checkpoint it");
  CLI::App* c_seal = app.add_subcommand(
      "seal-check", "Seal the victim and verify the black-box contract");
  CLI::App* c_attack = app.add_subcommand(
      "attack", "Train a disguiser against the sealed victim and evaluate it");
  CLI::App* c_ablate = app.add_subcommand(
      "ablate", "Matched-seed guidance ablation (star, cf, ba, full)");
  CLI::App* c_finetune = app.add_subcommand(
      "finetune", "White-box fine-tuning attack on a stolen victim copy");
  CLI::App* c_diagnose = app.add_subcommand(
      "diagnose", "Collect and render black-box domain statistics");
  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "Grid over guidance weights, aggregated into one CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg =
        config_path.empty() ? RunConfig() : RunConfig::load_file(config_path);
    for (const std::string& o : overrides) cfg.set_override(o);
    if (!data_root.empty()) cfg.set_override("data_root=" + data_root);

    if (dry_run) {
      std::cout << "config ok\nconfig_digest: " << cfg.digest() << "\n";
      return 0;
    }
    if (app.got_subcommand(c_pretrain)) return cmd_pretrain(cfg);
    if (app.got_subcommand(c_seal)) return cmd_seal_check(cfg);
    if (app.got_subcommand(c_attack)) return cmd_attack(cfg);
    if (app.got_subcommand(c_ablate)) return cmd_ablate(cfg);
    if (app.got_subcommand(c_finetune)) return cmd_finetune(cfg);
    if (app.got_subcommand(c_diagnose)) return cmd_diagnose(cfg);
    if (app.got_subcommand(c_sweep)) return cmd_sweep(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
