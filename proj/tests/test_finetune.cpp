#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntljb/domains.hpp"
#include "ntljb/finetune.hpp"
#include "ntljb/rng.hpp"
#include "ntljb/tensor.hpp"
#include "ntljb/victim.hpp"

using namespace ntljb;

namespace {

VictimConfig micro_arch(const DomainPair& pair) {
  VictimConfig a;
  a.widths = {4, 6, 6};
  a.class_count = pair.class_count;
  a.resolution = pair.resolution;
  a.channels = pair.channels;
  a.style_mix_layer = 2;
  return a;
}

Tensor logits_tensor(int rows, int classes, const std::vector<float>& v) {
  Tensor t({rows, classes});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = v[static_cast<std::size_t>(i)];
  return t;
}

Tensor random_images(int n, int c, int r, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, c, r, r});
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.uniform(-0.9, 0.9));
  return t;
}

bool params_bitwise_equal(std::vector<Param*> a, std::vector<Param*> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i]->value.bitwise_equal(b[i]->value)) return false;
  return true;
}

}  // namespace

TEST_CASE("distillation KL matches hand-computed values") {
  // Teacher (1,0) vs student (0,0): KL(softmax(1,0) || uniform) =
  // ln 2 - H(softmax(1,0)).
  const Tensor teacher = logits_tensor(1, 2, {1.0f, 0.0f});
  const Tensor student = logits_tensor(1, 2, {0.0f, 0.0f});
  Tensor grad;
  const double kl = distillation_kl(teacher, student, &grad);
  CHECK(kl == doctest::Approx(0.1109441).epsilon(1e-6));
  // Gradient rows are softmax(student) - softmax(teacher), scaled 1/rows.
  CHECK(grad.dim(0) == 1);
  CHECK(grad.dim(1) == 2);
  CHECK(grad[0] == doctest::Approx(0.5 - 0.7310585786300049).epsilon(1e-5));
  CHECK(grad[1] == doctest::Approx(0.5 - 0.2689414213699951).epsilon(1e-5));

  // A one-hot teacher against a flat student over 10 classes gives ln 10.
  std::vector<float> spike(10, 0.0f);
  spike[0] = 1000.0f;
  const Tensor onehot = logits_tensor(1, 10, spike);
  const Tensor flat = logits_tensor(1, 10, std::vector<float>(10, 0.0f));
  CHECK(distillation_kl(onehot, flat, nullptr) ==
        doctest::Approx(2.302585092994046).epsilon(1e-12));

  // Identical logits sit at the exact minimum: zero loss, zero gradient.
  Rng rng(71);
  Tensor same({3, 5});
  for (std::int64_t i = 0; i < same.numel(); ++i)
    same[i] = static_cast<float>(rng.normal(0.0, 1.5));
  Tensor zgrad;
  CHECK(distillation_kl(same, same, &zgrad) == 0.0);
  for (std::int64_t i = 0; i < zgrad.numel(); ++i) CHECK(zgrad[i] == 0.0f);
}

TEST_CASE("distillation KL gradient agrees with finite differences") {
  Rng rng(402);
  Tensor teacher({3, 5}), student({3, 5});
  for (std::int64_t i = 0; i < teacher.numel(); ++i) {
    teacher[i] = static_cast<float>(rng.normal(0.0, 1.2));
    student[i] = static_cast<float>(rng.normal(0.0, 1.2));
  }
  Tensor grad;
  distillation_kl(teacher, student, &grad);

  const double h = 1e-3;
  double max_rel = 0.0;
  for (std::int64_t i = 0; i < student.numel(); ++i) {
    const float saved = student[i];
    student[i] = static_cast<float>(static_cast<double>(saved) + h);
    const double lp = distillation_kl(teacher, student, nullptr);
    const float hi = student[i];
    student[i] = static_cast<float>(static_cast<double>(saved) - h);
    const double lm = distillation_kl(teacher, student, nullptr);
    const float lo = student[i];
    student[i] = saved;
    const double fd = (lp - lm) / (static_cast<double>(hi) - lo);
    const double rel = std::abs(fd - grad[i]) /
                       std::max(std::abs(fd), 1e-3);
    max_rel = std::max(max_rel, rel);
  }
  CHECK(max_rel < 1e-3);

  // Each gradient row is a difference of two probability vectors, so it
  // sums to zero.
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) s += grad[r * 5 + j];
    CHECK(std::abs(s) < 1e-6);
  }
}

TEST_CASE("distillation KL rejects malformed logits") {
  const Tensor a = logits_tensor(2, 3, {1, 0, 0, 0, 1, 0});
  const Tensor b = logits_tensor(2, 2, {1, 0, 0, 1});
  CHECK_THROWS_AS(distillation_kl(a, b, nullptr), std::invalid_argument);
  Tensor cube({2, 3, 1, 1});
  CHECK_THROWS_AS(distillation_kl(cube, cube, nullptr), std::invalid_argument);
  Tensor empty;
  CHECK_THROWS_AS(distillation_kl(empty, empty, nullptr),
                  std::invalid_argument);
}

TEST_CASE("default perturbations are distinct and well-behaved") {
  const PerturbationSet set = default_perturbations();
  CHECK(set.size() == 4);
  std::set<std::string> names;
  for (const auto& p : set) names.insert(p.name);
  CHECK(names.size() == set.size());

  // Mean blur leaves a constant image unchanged and keeps any image inside
  // its own value range.
  const Perturbation* blur = nullptr;
  for (const auto& p : set)
    if (p.name.find("blur") != std::string::npos) blur = &p;
  REQUIRE(blur != nullptr);
  Tensor flat({1, 2, 6, 6});
  flat.fill(0.25f);
  Rng rng(5);
  const Tensor same = blur->apply(flat, rng);
  CHECK(same.bitwise_equal(flat));
  const Tensor img = random_images(2, 3, 8, 31);
  const Tensor blurred = blur->apply(img, rng);
  for (std::int64_t i = 0; i < blurred.numel(); ++i) {
    CHECK(blurred[i] >= -0.9f);
    CHECK(blurred[i] <= 0.9f);
  }
}

TEST_CASE("third-party generation is seeded, clamped, and shape-checked") {
  const PerturbationSet set = default_perturbations();
  const Tensor img = random_images(3, 3, 8, 77);

  const auto a = generate_third_party(img, set, 900, false);
  const auto b = generate_third_party(img, set, 900, false);
  const auto c = generate_third_party(img, set, 901, false);
  REQUIRE(a.size() == set.size());
  bool any_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].same_shape(img));
    CHECK(a[i].bitwise_equal(b[i]));
    if (!a[i].bitwise_equal(c[i])) any_differs = true;
  }
  CHECK(any_differs);

  // Noise added near the boundary must be clamped back into [-1, 1].
  Tensor edge({2, 3, 8, 8});
  edge.fill(1.0f);
  for (const Tensor& t : generate_third_party(edge, set, 4, false))
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      CHECK(t[i] <= 1.0f);
      CHECK(t[i] >= -1.0f);
    }

  CHECK_THROWS_AS(generate_third_party(img, PerturbationSet{}, 1, false),
                  std::invalid_argument);
  Tensor flat3({2, 4});
  CHECK_THROWS_AS(generate_third_party(flat3, set, 1, false),
                  std::invalid_argument);
  PerturbationSet bad;
  bad.push_back({"drop_row", [](const Tensor& x, Rng&) {
                   Tensor out({x.dim(0) - 1, x.dim(1), x.dim(2), x.dim(3)});
                   out.zero();
                   return out;
                 }});
  CHECK_THROWS_AS(generate_third_party(img, bad, 1, false),
                  std::runtime_error);
}

TEST_CASE("self-distillation is zero for unperturbed copies") {
  const DomainPair pair = load_domain_pair("digits_micro");
  const VictimModel victim(micro_arch(pair), 11);
  const Tensor clean = pair.authorized_test.batch({0, 1, 2, 3});

  // The model is its own teacher, so exact copies give exactly zero.
  CHECK(self_distillation_loss(victim, clean, {clean, clean}) == 0.0);

  const auto copies =
      generate_third_party(clean, default_perturbations(), 6, false);
  const double sd = self_distillation_loss(victim, clean, copies);
  CHECK(sd > 0.0);
  CHECK(std::isfinite(sd));

  CHECK_THROWS_AS(self_distillation_loss(victim, clean, {}),
                  std::invalid_argument);
  const Tensor wrong = random_images(2, 3, 16, 9);
  CHECK_THROWS_AS(self_distillation_loss(victim, clean, {wrong}),
                  std::invalid_argument);
}

TEST_CASE("fine-tuning meters data sources per mode") {
  const DomainPair pair = load_domain_pair("digits_micro");
  const VictimModel victim(micro_arch(pair), 11);
  const AttackerDataView view = take_authorized_subset(pair, 0.05, 21);
  REQUIRE(view.authorized_subset.count() == 15);
  const Tensor disguised = view.unauthorized_pool.batch_range(0, 10);

  FinetuneConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.seed = 33;
  // 15 samples in batches of 4 with the tail kept: 4 batches per epoch.
  const std::int64_t steps = 2 * 4;
  const std::int64_t copies = 4;

  cfg.mode = "ftal";
  const FinetuneResult ftal = finetune_attack(victim, pair, view, nullptr, cfg);
  CHECK(ftal.authorized_batches == steps);
  CHECK(ftal.thirdparty_batches == 0);
  CHECK(ftal.disguised_batches == 0);
  CHECK(ftal.epoch_losses.size() == 2);

  cfg.mode = "rtal";
  const FinetuneResult rtal = finetune_attack(victim, pair, view, nullptr, cfg);
  CHECK(rtal.authorized_batches == steps);
  CHECK(rtal.thirdparty_batches == 0);
  CHECK(rtal.disguised_batches == 0);

  cfg.mode = "transntl";
  const FinetuneResult trans =
      finetune_attack(victim, pair, view, nullptr, cfg);
  CHECK(trans.authorized_batches == steps);
  CHECK(trans.thirdparty_batches == steps * copies);
  CHECK(trans.disguised_batches == 0);

  cfg.mode = "transntl_plus_jailntl";
  const FinetuneResult plus =
      finetune_attack(victim, pair, view, &disguised, cfg);
  CHECK(plus.authorized_batches == steps);
  CHECK(plus.thirdparty_batches == steps * copies);
  CHECK(plus.disguised_batches == steps);

  // Head re-initialization starts rtal from different classifier weights,
  // so the trained heads diverge; the source victim is never modified.
  auto fp = const_cast<FinetuneResult&>(ftal).model.params();
  auto rp = const_cast<FinetuneResult&>(rtal).model.params();
  REQUIRE(fp.size() == rp.size());
  CHECK_FALSE(fp[fp.size() - 2]->value.bitwise_equal(rp[rp.size() - 2]->value));
  VictimModel fresh(micro_arch(pair), 11);
  VictimModel source = victim.clone();
  CHECK(params_bitwise_equal(source.params(), fresh.params()));

  for (const FinetuneResult* r : {&ftal, &rtal, &trans, &plus}) {
    CHECK(r->metrics.authorized_acc >= 0.0);
    CHECK(r->metrics.authorized_acc <= 100.0);
    CHECK(r->metrics.unauthorized_acc >= 0.0);
    CHECK(r->metrics.unauthorized_acc <= 100.0);
    for (double l : r->epoch_losses) CHECK(std::isfinite(l));
  }
}

TEST_CASE("fine-tuning is deterministic per seed and reduces the loss") {
  const DomainPair pair = load_domain_pair("digits_micro");
  const VictimModel victim(micro_arch(pair), 19);
  const AttackerDataView view = take_authorized_subset(pair, 0.05, 21);

  FinetuneConfig cfg;
  cfg.mode = "transntl";
  cfg.epochs = 3;
  cfg.batch_size = 5;
  cfg.lr = 3e-3;
  cfg.seed = 40;
  FinetuneResult a = finetune_attack(victim, pair, view, nullptr, cfg);
  FinetuneResult b = finetune_attack(victim, pair, view, nullptr, cfg);
  CHECK(params_bitwise_equal(a.model.params(), b.model.params()));
  REQUIRE(a.epoch_losses.size() == b.epoch_losses.size());
  for (std::size_t i = 0; i < a.epoch_losses.size(); ++i)
    CHECK(a.epoch_losses[i] == b.epoch_losses[i]);

  cfg.seed = 41;
  FinetuneResult c = finetune_attack(victim, pair, view, nullptr, cfg);
  CHECK_FALSE(params_bitwise_equal(a.model.params(), c.model.params()));

  CHECK(a.epoch_losses.back() < a.epoch_losses.front());
}

TEST_CASE("fine-tuning validates its configuration and inputs") {
  const DomainPair pair = load_domain_pair("digits_micro");
  const VictimModel victim(micro_arch(pair), 11);
  const AttackerDataView view = take_authorized_subset(pair, 0.05, 21);
  const Tensor disguised = view.unauthorized_pool.batch_range(0, 6);

  FinetuneConfig cfg;
  cfg.mode = "ftal";
  cfg.epochs = 1;
  cfg.batch_size = 5;

  FinetuneConfig bad = cfg;
  bad.mode = "distill_everything";
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, nullptr, bad),
                  std::invalid_argument);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, nullptr, bad),
                  std::invalid_argument);
  bad = cfg;
  bad.batch_size = 1;
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, nullptr, bad),
                  std::invalid_argument);
  bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, nullptr, bad),
                  std::invalid_argument);
  bad = cfg;
  bad.lambda_sd = -1.0;
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, nullptr, bad),
                  std::invalid_argument);
  bad = cfg;
  bad.lambda_sd = std::nan("");
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, nullptr, bad),
                  std::invalid_argument);

  // The subset must carry labels and at least one sample.
  AttackerDataView unlabeled = view;
  unlabeled.authorized_subset.labels.clear();
  CHECK_THROWS_AS(finetune_attack(victim, pair, unlabeled, nullptr, cfg),
                  std::invalid_argument);
  AttackerDataView hollow = view;
  hollow.authorized_subset = SampleSet{};
  CHECK_THROWS_AS(finetune_attack(victim, pair, hollow, nullptr, cfg),
                  std::invalid_argument);

  // Architecture and pair must agree.
  VictimConfig wide = micro_arch(pair);
  wide.resolution = 32;
  const VictimModel mismatched(wide, 11);
  CHECK_THROWS_AS(finetune_attack(mismatched, pair, view, nullptr, cfg),
                  std::invalid_argument);

  // The combined mode insists on usable disguised data.
  cfg.mode = "transntl_plus_jailntl";
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, nullptr, cfg),
                  std::invalid_argument);
  const Tensor empty;
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, &empty, cfg),
                  std::invalid_argument);
  const Tensor narrow = random_images(4, 1, pair.resolution, 3);
  CHECK_THROWS_AS(finetune_attack(victim, pair, view, &narrow, cfg),
                  std::invalid_argument);
  const FinetuneResult ok = finetune_attack(victim, pair, view, &disguised, cfg);
  CHECK(ok.disguised_batches == ok.authorized_batches);
}
