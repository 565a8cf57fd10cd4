#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ntljb/attack.hpp"
#include "ntljb/bytes.hpp"
#include "ntljb/domains.hpp"
#include "ntljb/oracle.hpp"
#include "ntljb/rng.hpp"
#include "ntljb/victim.hpp"

using namespace ntljb;

namespace {

std::string temp_path(const std::string& leaf) {
  return (std::filesystem::temp_directory_path() / leaf).string();
}

VictimConfig micro_arch(const DomainPair& pair) {
  VictimConfig a;
  a.widths = {4, 6, 6};
  a.class_count = pair.class_count;
  a.resolution = pair.resolution;
  a.channels = pair.channels;
  a.style_mix_layer = 2;
  return a;
}

std::shared_ptr<VictimModel> micro_victim(const DomainPair& pair,
                                          std::uint64_t seed) {
  return std::make_shared<VictimModel>(micro_arch(pair), seed);
}

AttackConfig cheap_cfg() {
  AttackConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 30;
  cfg.authorized_fraction = 0.05;
  cfg.disguiser.width = 4;
  cfg.disguiser.residual_blocks = 1;
  cfg.disguiser.disc_width = 4;
  cfg.zo.probe_count = 2;
  cfg.seed = 5;
  return cfg;
}

bool params_bitwise_equal(std::vector<Param*> a, std::vector<Param*> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i]->value.bitwise_equal(b[i]->value)) return false;
  return true;
}

bool ensembles_bitwise_equal(DisguiseEnsemble& x, DisguiseEnsemble& y) {
  return params_bitwise_equal(x.to_authorized.params(),
                              y.to_authorized.params()) &&
         params_bitwise_equal(x.to_unauthorized.params(),
                              y.to_unauthorized.params()) &&
         params_bitwise_equal(x.disc_authorized.params(),
                              y.disc_authorized.params()) &&
         params_bitwise_equal(x.disc_unauthorized.params(),
                              y.disc_unauthorized.params());
}

}  // namespace

TEST_CASE("star mode never queries the oracle during training") {
  DomainPair pair = load_domain_pair("digits_micro");
  AttackerDataView view = take_authorized_subset(pair, 0.05, 5);
  BlackBoxOracle oracle(micro_victim(pair, 7));

  AttackConfig cfg = cheap_cfg();
  cfg.mode = "jailntl_star";
  TrainedAttack trained = train_attack(view, oracle, cfg);

  CHECK(trained.training_queries == 0);
  CHECK(oracle.query_count() == 0);
  const std::size_t steps_per_epoch =
      static_cast<std::size_t>(view.unauthorized_pool.count() / cfg.batch_size);
  CHECK(trained.history.size() == steps_per_epoch * cfg.epochs);
  for (const LossBundle& b : trained.history) {
    CHECK(b.cf == 0.0);
    CHECK(b.ba == 0.0);
    CHECK(std::isfinite(b.total));
  }
  CHECK(trained.ensemble.step ==
        static_cast<std::int64_t>(trained.history.size()));
}

TEST_CASE("zero guidance weights reduce jailntl to jailntl_star bitwise") {
  DomainPair pair = load_domain_pair("digits_micro");
  AttackerDataView view = take_authorized_subset(pair, 0.05, 5);
  BlackBoxOracle oracle(micro_victim(pair, 7));

  AttackConfig star = cheap_cfg();
  star.mode = "jailntl_star";
  AttackConfig limp = cheap_cfg();
  limp.mode = "jailntl";
  limp.weights.lambda_cf = 0.0;
  limp.weights.lambda_ba = 0.0;

  TrainedAttack a = train_attack(view, oracle, star);
  TrainedAttack b = train_attack(view, oracle, limp);
  CHECK(oracle.query_count() == 0);
  CHECK(ensembles_bitwise_equal(a.ensemble, b.ensemble));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    CHECK(a.history[i].total == b.history[i].total);
}

TEST_CASE("guided training consumes exactly the closed-form query budget") {
  DomainPair pair = load_domain_pair("digits_micro");
  AttackerDataView view = take_authorized_subset(pair, 0.05, 5);
  BlackBoxOracle oracle(micro_victim(pair, 11));

  AttackConfig cfg = cheap_cfg();
  cfg.mode = "jailntl";
  TrainedAttack trained = train_attack(view, oracle, cfg);

  const std::uint64_t steps = trained.history.size();
  CHECK(steps == static_cast<std::uint64_t>(view.unauthorized_pool.count() /
                                            cfg.batch_size));
  CHECK(trained.training_queries ==
        steps * mgd_queries_per_step(cfg.batch_size, cfg.zo.probe_count));
  CHECK(oracle.query_count() == trained.training_queries);
  for (const LossBundle& b : trained.history) {
    CHECK(b.cf >= 0.0);
    CHECK(b.ba >= 0.0);
  }

  // Training is deterministic per seed even with guidance active.
  BlackBoxOracle oracle2(micro_victim(pair, 11));
  TrainedAttack again = train_attack(view, oracle2, cfg);
  CHECK(ensembles_bitwise_equal(trained.ensemble, again.ensemble));
}

TEST_CASE("batch prediction and one-image prediction agree") {
  DomainPair pair = load_domain_pair("digits_micro");
  BlackBoxOracle oracle(micro_victim(pair, 13));
  DisguiseConfig dcfg;
  dcfg.width = 4;
  dcfg.residual_blocks = 1;
  dcfg.disc_width = 4;
  DisguiseEnsemble ens = build_ensemble(pair.resolution, pair.channels, dcfg, 3);

  std::vector<int> idx = {0, 1, 2, 3, 4, 5};
  Tensor batch = pair.unauthorized_test.batch(idx);
  std::vector<int> as_batch =
      attack_predict_batch(ens.to_authorized, oracle, batch);
  REQUIRE(as_batch.size() == idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Tensor one = pair.unauthorized_test.batch({idx[i]});
    CHECK(attack_predict(ens.to_authorized, oracle, one) == as_batch[i]);
  }
  CHECK_THROWS_AS(attack_predict(ens.to_authorized, oracle, batch),
                  std::invalid_argument);
}

TEST_CASE("evaluation meters both passes and closes the report") {
  DomainPair pair = load_domain_pair("digits_micro");
  BlackBoxOracle oracle(micro_victim(pair, 17));
  DisguiseConfig dcfg;
  dcfg.width = 4;
  dcfg.residual_blocks = 1;
  dcfg.disc_width = 4;
  DisguiseEnsemble ens = build_ensemble(pair.resolution, pair.channels, dcfg, 3);

  AttackReport r = evaluate_attack(ens.to_authorized, oracle, pair);
  const std::uint64_t a = pair.authorized_test.count();
  const std::uint64_t u = pair.unauthorized_test.count();
  CHECK(r.evaluation_queries == 2 * (a + u));
  CHECK(r.query_count == oracle.query_count());
  CHECK(r.integrity_ok);
  CHECK(r.authorized_delta == r.authorized_after - r.authorized_before);
  CHECK(r.unauthorized_delta == r.unauthorized_after - r.unauthorized_before);
  for (double acc : {r.authorized_before, r.authorized_after,
                     r.unauthorized_before, r.unauthorized_after}) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 100.0);
  }
}

TEST_CASE("run_attack stamps seed and mode and validates its config") {
  DomainPair pair = load_domain_pair("digits_micro");
  AttackConfig cfg = cheap_cfg();
  cfg.mode = "jailntl_star";
  cfg.seed = 99;

  AttackRunResult run = run_attack(pair, micro_victim(pair, 19), cfg);
  CHECK(run.report.seed == 99);
  CHECK(run.report.mode == "jailntl_star");
  CHECK(run.report.training_queries == 0);
  CHECK(run.report.evaluation_queries > 0);
  CHECK(run.report.integrity_ok);

  AttackConfig bad = cheap_cfg();
  bad.mode = "transfer";
  CHECK_THROWS_AS(run_attack(pair, micro_victim(pair, 19), bad),
                  std::invalid_argument);
  bad = cheap_cfg();
  bad.epochs = 0;
  CHECK_THROWS_AS(run_attack(pair, micro_victim(pair, 19), bad),
                  std::invalid_argument);
  bad = cheap_cfg();
  bad.authorized_fraction = 0.0;
  CHECK_THROWS_AS(run_attack(pair, micro_victim(pair, 19), bad),
                  std::invalid_argument);
  bad = cheap_cfg();
  bad.batch_size = 0;
  CHECK_THROWS_AS(run_attack(pair, micro_victim(pair, 19), bad),
                  std::invalid_argument);

  // Data that does not match the sealed resolution is refused up front.
  VictimConfig wrong = micro_arch(pair);
  wrong.resolution = 8;
  auto mismatched = std::make_shared<VictimModel>(wrong, 1);
  BlackBoxOracle small_oracle(mismatched);
  AttackerDataView view = take_authorized_subset(pair, 0.05, 5);
  CHECK_THROWS_AS(train_attack(view, small_oracle, cfg),
                  std::invalid_argument);
}

TEST_CASE("ablation runs the four variants with fresh meters") {
  DomainPair pair = load_domain_pair("digits_micro");
  AttackConfig cfg = cheap_cfg();
  cfg.batch_size = 60;  // two steps: keep the guided variants cheap
  cfg.zo.probe_count = 1;

  std::vector<AblationEntry> entries =
      run_ablation(pair, micro_victim(pair, 23), cfg);
  REQUIRE(entries.size() == 4);
  CHECK(entries[0].name == "jailntl_star");
  CHECK(entries[1].name == "jailntl_cf");
  CHECK(entries[2].name == "jailntl_ba");
  CHECK(entries[3].name == "jailntl_full");

  CHECK(entries[0].report.mode == "jailntl_star");
  CHECK(entries[0].report.training_queries == 0);
  for (int i = 1; i < 4; ++i) {
    CHECK(entries[static_cast<std::size_t>(i)].report.mode == "jailntl");
    CHECK(entries[static_cast<std::size_t>(i)].report.training_queries > 0);
  }
  // Fresh oracle per variant: total meter = own training + own evaluation.
  for (const AblationEntry& e : entries) {
    CHECK(e.report.query_count ==
          e.report.training_queries + e.report.evaluation_queries);
    CHECK(e.report.integrity_ok);
    CHECK(e.report.seed == cfg.seed);
  }
}

TEST_CASE("losses CSV uses the pinned header, one row per step") {
  LossBundle b0;
  b0.adv = -0.5;
  b0.adv_r = -1.25;
  b0.cs = 0.125;
  b0.cs_r = 0.0625;
  b0.cf = 0.5;
  b0.ba = 0.25;
  b0.total = -0.625;
  LossBundle b1 = b0;
  b1.total = 2.0;

  const std::string path = temp_path("ntljb_losses_test.csv");
  write_losses_csv({b0, b1}, path);
  const std::string want =
      "step,L_adv,L_adv^r,L_cs,L_cs^r,L_cf,L_ba,L_total\n"
      "0,-0.5,-1.25,0.125,0.0625,0.5,0.25,-0.625\n"
      "1,-0.5,-1.25,0.125,0.0625,0.5,0.25,2\n";
  CHECK(read_text_file(path) == want);

  write_losses_csv({}, temp_path("ntljb_losses_empty.csv"));
  CHECK(read_text_file(temp_path("ntljb_losses_empty.csv")) ==
        "step,L_adv,L_adv^r,L_cs,L_cs^r,L_cf,L_ba,L_total\n");
  std::filesystem::remove(path);
  std::filesystem::remove(temp_path("ntljb_losses_empty.csv"));
}

TEST_CASE("report JSON carries stable keys and is byte-deterministic") {
  AttackReport r;
  r.authorized_before = 97.5;
  r.authorized_after = 88.25;
  r.unauthorized_before = 2.0;
  r.unauthorized_after = 74.5;
  r.authorized_delta = r.authorized_after - r.authorized_before;
  r.unauthorized_delta = r.unauthorized_after - r.unauthorized_before;
  r.query_count = 24000;
  r.training_queries = 21600;
  r.evaluation_queries = 2400;
  r.integrity_ok = true;
  r.config_digest = "deadbeef";
  r.seed = 3;
  r.mode = "jailntl";

  const std::string p1 = temp_path("ntljb_report_1.json");
  const std::string p2 = temp_path("ntljb_report_2.json");
  write_report_json(r, p1);
  write_report_json(r, p2);
  CHECK(read_text_file(p1) == read_text_file(p2));

  const nlohmann::json j = nlohmann::json::parse(read_text_file(p1));
  CHECK(j.at("authorized_acc_before").get<double>() == 97.5);
  CHECK(j.at("unauthorized_acc_after").get<double>() == 74.5);
  CHECK(j.at("query_count").get<std::uint64_t>() == 24000);
  CHECK(j.at("training_queries").get<std::uint64_t>() == 21600);
  CHECK(j.at("evaluation_queries").get<std::uint64_t>() == 2400);
  CHECK(j.at("integrity_ok").get<bool>());
  CHECK(j.at("config_digest").get<std::string>() == "deadbeef");
  CHECK(j.at("seed").get<std::uint64_t>() == 3);
  CHECK(j.at("mode").get<std::string>() == "jailntl");
  CHECK(j.contains("version"));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}
