#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hardbatch/losses.hpp"
#include "oracles.hpp"

using namespace hardbatch;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Matrix m(n, d);
  for (double& v : m.values()) v = rng.next_normal();
  return m;
}

}  // namespace

TEST_CASE("cross entropy matches log-softmax by hand") {
  const Matrix logits(2, 3, std::vector<double>{1.0, 2.0, 3.0, 0.0, 0.0, 0.0});
  const std::vector<int> labels{2, 1};
  const LossOutput out = softmax_cross_entropy(logits, labels);
  const double l0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  const double l1 = std::log(3.0);
  CHECK(out.value == doctest::Approx((l0 + l1) / 2));
  CHECK(out.grad(1, 0) == doctest::Approx(1.0 / 6));
  CHECK(out.grad(1, 1) == doctest::Approx((1.0 / 3 - 1.0) / 2));
}

TEST_CASE("cross entropy gradient matches finite differences") {
  Rng rng(1);
  Matrix logits = random_matrix(4, 5, rng);
  const std::vector<int> labels{0, 4, 2, 2};
  const LossOutput out = softmax_cross_entropy(logits, labels);
  const auto fd = oracle::central_difference(
      logits.values(), [&] { return softmax_cross_entropy(logits, labels).value; }, 1e-6);
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(out.grad.values()[i] == doctest::Approx(fd[i]).epsilon(1e-6));
}

TEST_CASE("cross entropy is stable for large logits and rejects bad labels") {
  const Matrix logits(1, 2, std::vector<double>{1000.0, 0.0});
  const std::vector<int> ok{0}, bad{2}, negative{-1};
  CHECK(std::isfinite(softmax_cross_entropy(logits, ok).value));
  CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), std::invalid_argument);
  CHECK_THROWS_AS(scene_adversarial_loss(logits, negative), std::invalid_argument);
}

TEST_CASE("batch-hard selection and loss agree with exhaustive enumeration") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t classes = 2 + rng.next_int(3);
    std::vector<int> labels;
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t k = 0; k < 2 + rng.next_int(3); ++k) labels.push_back(static_cast<int>(c));
    rng.shuffle(labels);
    const Matrix emb = random_matrix(labels.size(), 3, rng);
    const TripletResult r = batch_hard_triplet(emb, labels, 0.3);
    const auto ref = oracle::enumerate_triplets(emb, labels, 0.3);
    CHECK(r.loss.value == doctest::Approx(ref.loss).epsilon(1e-12));
    CHECK(r.hardest_positive == ref.positive);
    CHECK(r.hardest_negative == ref.negative);
  }
}

TEST_CASE("duplicate embeddings resolve ties to the lowest index") {
  // Samples 1 and 3 are copies of the anchor's class mates; 2 and 4 are
  // equidistant negatives.
  const Matrix emb(6, 1, std::vector<double>{0.0, 1.0, 2.0, 1.0, 2.0, 0.0});
  const std::vector<int> labels{0, 0, 1, 0, 1, 1};
  const TripletResult r = batch_hard_triplet(emb, labels, 0.5);
  CHECK(r.hardest_positive[0] == 1);
  CHECK(r.hardest_negative[0] == 5);
  CHECK(r.hardest_negative[1] == 2);
  CHECK(r.hardest_positive[2] == 5);
  const auto ref = oracle::enumerate_triplets(emb, labels, 0.5);
  CHECK(r.hardest_positive == ref.positive);
  CHECK(r.hardest_negative == ref.negative);
}

TEST_CASE("coincident points contribute no gradient") {
  // Anchor 0 has its positive at distance zero and its negative far away.
  const Matrix emb(4, 2, std::vector<double>{0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0});
  const std::vector<int> labels{0, 0, 1, 1};
  const TripletResult r = batch_hard_triplet(emb, labels, 1.0);
  for (double v : r.loss.grad.values()) CHECK(std::isfinite(v));
  // Each anchor: loss = 1 + 0 - 0.1.
  CHECK(r.loss.value == doctest::Approx(0.9));
  CHECK(r.stats.active_fraction == 1.0);
  CHECK(r.stats.mean_hard_pos_dist == 0.0);
  // Only the anchor-negative pulls remain: anchor 0 is pushed away from 2.
  CHECK(r.loss.grad(0, 0) > 0.0);
  CHECK(r.loss.grad(0, 1) == 0.0);
}

TEST_CASE("triplet gradient matches finite differences away from kinks") {
  Rng rng(3);
  Matrix emb = random_matrix(8, 4, rng);
  const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3};
  const TripletResult r = batch_hard_triplet(emb, labels, 2.0);
  CHECK(r.stats.active_fraction == 1.0);
  const auto fd = oracle::central_difference(
      emb.values(), [&] { return batch_hard_triplet(emb, labels, 2.0).loss.value; }, 1e-6);
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(r.loss.grad.values()[i] == doctest::Approx(fd[i]).epsilon(1e-6));
}

TEST_CASE("inactive anchors are counted and give zero loss") {
  const Matrix emb(4, 1, std::vector<double>{0.0, 0.1, 10.0, 10.1});
  const std::vector<int> labels{0, 0, 1, 1};
  const TripletResult r = batch_hard_triplet(emb, labels, 0.3);
  CHECK(r.loss.value == 0.0);
  CHECK(r.stats.active_fraction == 0.0);
  for (double v : r.loss.grad.values()) CHECK(v == 0.0);
}

TEST_CASE("triplet input validation") {
  const Matrix emb(3, 1, std::vector<double>{0.0, 1.0, 2.0});
  const std::vector<int> singleton{0, 0, 1}, one_class{0, 0, 0}, short_labels{0, 1};
  CHECK_THROWS_AS(batch_hard_triplet(emb, singleton, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(batch_hard_triplet(emb, one_class, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(batch_hard_triplet(emb, short_labels, 0.3), std::invalid_argument);
}

TEST_CASE("total loss combines the three terms") {
  CHECK(total_loss(1.0, 2.0, 3.0, 0.5, 0.1) == doctest::Approx(1.0 + 1.0 - 0.3));
  CHECK(total_loss(1.0, 2.0, 3.0, 1.0, 0.0) == 3.0);
  CHECK_THROWS_AS(total_loss(1.0, 2.0, 3.0, 1.0, -0.1), std::invalid_argument);
}
