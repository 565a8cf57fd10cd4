#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ntljb/oracle.hpp"
#include "ntljb/rng.hpp"
#include "ntljb/victim.hpp"

using namespace ntljb;

namespace {

VictimConfig tiny_arch() {
  VictimConfig a;
  a.widths = {4, 6, 6};
  a.class_count = 5;
  a.resolution = 8;
  a.channels = 3;
  a.style_mix_layer = 2;
  return a;
}

std::shared_ptr<VictimModel> make_victim(std::uint64_t seed) {
  return std::make_shared<VictimModel>(tiny_arch(), seed);
}

Tensor valid_images(int n, Rng& rng) {
  Tensor x({n, 3, 8, 8});
  for (std::int64_t i = 0; i < x.numel(); ++i)
    x[i] = static_cast<float>(rng.uniform(-0.9, 0.9));
  return x;
}

}  // namespace

TEST_CASE("sealing freezes gradients and records the live digest") {
  auto victim = make_victim(11);
  const std::string digest = victim->parameter_digest();

  BlackBoxOracle oracle(victim);
  CHECK(oracle.parameter_digest() == digest);
  CHECK(oracle.mode() == OracleMode::logits);
  CHECK(oracle.class_count() == 5);
  CHECK(oracle.resolution() == 8);
  CHECK(oracle.channels() == 3);
  CHECK(oracle.query_count() == 0);

  // Sealing flips the model itself, so even the owning handle cannot reach
  // a gradient entry point any more.
  Rng rng(1);
  Tensor x = valid_images(2, rng);
  VictimModel::TrainPass pass = victim->forward_train(x);
  Tensor dlogits({2, 5});
  dlogits.fill(0.1f);
  CHECK_THROWS_AS(victim->backward_train(pass, dlogits, nullptr),
                  std::logic_error);

  CHECK(std::string(oracle_mode_name(OracleMode::logits)) == "logits");
  CHECK(std::string(oracle_mode_name(OracleMode::labels_only)) ==
        "labels_only");
  CHECK_THROWS_AS(BlackBoxOracle(nullptr), std::invalid_argument);
}

TEST_CASE("query returns the sealed model's logits and meters per image") {
  auto victim = make_victim(17);
  Rng rng(2);
  Tensor x3 = valid_images(3, rng);
  Tensor x2 = valid_images(2, rng);
  const Tensor want3 = victim->logits(x3);
  const Tensor want2 = victim->logits(x2);

  BlackBoxOracle oracle(victim);
  Tensor got3 = oracle.query(x3);
  CHECK(got3.bitwise_equal(want3));
  CHECK(oracle.query_count() == 3);

  CHECK(oracle.query(x2).bitwise_equal(want2));
  CHECK(oracle.query_count() == 5);

  // Repeating a query gives identical bytes and keeps metering.
  CHECK(oracle.query(x3).bitwise_equal(want3));
  CHECK(oracle.query_count() == 8);
}

TEST_CASE("predict_labels is the argmax of query, lowest index on ties") {
  auto victim = make_victim(23);
  BlackBoxOracle oracle(victim);
  Rng rng(3);
  Tensor x = valid_images(4, rng);

  Tensor z = oracle.query(x);
  std::vector<int> labels = oracle.predict_labels(x);
  REQUIRE(labels.size() == 4);
  for (int r = 0; r < 4; ++r) {
    const float* row = z.data() + static_cast<std::int64_t>(r) * z.dim(1);
    int best = 0;
    for (int i = 1; i < z.dim(1); ++i)
      if (row[i] > row[best]) best = i;
    CHECK(labels[static_cast<std::size_t>(r)] == best);
  }
  CHECK(oracle.query_count() == 8);  // 4 via query, 4 via predict_labels

  // A zeroed model emits all-equal logits; every tie resolves to class 0.
  auto flat = make_victim(23);
  for (Param* p : flat->params()) p->value.zero();
  BlackBoxOracle flat_oracle(flat);
  for (int label : flat_oracle.predict_labels(x)) CHECK(label == 0);
}

TEST_CASE("labels_only mode hides logits but still predicts") {
  auto victim = make_victim(29);
  BlackBoxOracle oracle(victim, OracleMode::labels_only);
  CHECK(oracle.mode() == OracleMode::labels_only);

  Rng rng(4);
  Tensor x = valid_images(3, rng);
  CHECK_THROWS_AS(oracle.query(x), std::logic_error);
  CHECK(oracle.query_count() == 0);  // the refusal is not billed

  std::vector<int> labels = oracle.predict_labels(x);
  CHECK(labels.size() == 3);
  CHECK(oracle.query_count() == 3);
}

TEST_CASE("malformed queries are rejected before they are metered") {
  auto victim = make_victim(31);
  BlackBoxOracle oracle(victim);
  Rng rng(5);

  Tensor bad_channels({2, 1, 8, 8});
  CHECK_THROWS_AS(oracle.query(bad_channels), std::invalid_argument);

  Tensor bad_res({2, 3, 16, 16});
  CHECK_THROWS_AS(oracle.query(bad_res), std::invalid_argument);

  Tensor bad_rank({3, 8, 8});
  CHECK_THROWS_AS(oracle.query(bad_rank), std::invalid_argument);

  Tensor nan_pix = valid_images(2, rng);
  nan_pix[7] = std::nanf("");
  CHECK_THROWS_AS(oracle.query(nan_pix), std::invalid_argument);

  Tensor hot = valid_images(2, rng);
  hot.fill(2.0f);
  CHECK_THROWS_AS(oracle.query(hot), std::invalid_argument);

  Tensor cold = valid_images(2, rng);
  cold[0] = -1.5f;
  CHECK_THROWS_AS(oracle.query(cold), std::invalid_argument);
  CHECK_THROWS_AS(oracle.predict_labels(cold), std::invalid_argument);

  CHECK(oracle.query_count() == 0);

  // The closed interval boundary is legal.
  Tensor edge = valid_images(1, rng);
  edge[0] = 1.0f;
  edge[1] = -1.0f;
  CHECK(oracle.query(edge).dim(0) == 1);
  CHECK(oracle.query_count() == 1);
}

TEST_CASE("weight tampering through a retained handle is detectable") {
  auto victim = make_victim(37);
  BlackBoxOracle oracle(victim);
  const std::string sealed = oracle.parameter_digest();
  CHECK(oracle.verify_integrity());

  Param* p = victim->params()[0];
  const float kept = p->value[0];
  p->value[0] += 0.5f;
  CHECK_FALSE(oracle.verify_integrity());
  CHECK(oracle.parameter_digest() == sealed);  // seal-time digest is fixed

  p->value[0] = kept;
  CHECK(oracle.verify_integrity());
}

TEST_CASE("concurrent queries serialize and meter exactly") {
  auto victim = make_victim(41);
  BlackBoxOracle oracle(victim);
  Rng rng(6);
  Tensor x = valid_images(2, rng);
  const Tensor want = victim->logits(x);

  const int threads = 4, per_thread = 5;
  std::vector<int> mismatches(threads, 0);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      for (int i = 0; i < per_thread; ++i)
        if (!oracle.query(x).bitwise_equal(want)) mismatches[t]++;
    });
  }
  for (auto& th : pool) th.join();

  for (int m : mismatches) CHECK(m == 0);
  CHECK(oracle.query_count() ==
        static_cast<std::uint64_t>(threads) * per_thread * x.dim(0));
  CHECK(oracle.verify_integrity());
}
