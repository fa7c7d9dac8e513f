#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "hardbatch/data.hpp"
#include "hardbatch/sampling.hpp"

using namespace hardbatch;

namespace {

std::vector<int> labels_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t i = 0; i < counts[c]; ++i) labels.push_back(static_cast<int>(c));
  return labels;
}

void check_plan_shape(const EpochPlan& plan, std::span<const int> labels, std::size_t P,
                      std::size_t K) {
  std::set<int> seen_classes;
  for (const Batch& b : plan.batches) {
    REQUIRE(b.classes.size() == P);
    REQUIRE(b.indices.size() == P * K);
    CHECK(std::set<int>(b.classes.begin(), b.classes.end()).size() == P);
    for (std::size_t i = 0; i < b.indices.size(); ++i) {
      CHECK(labels[b.indices[i]] == b.classes[i / K]);
    }
    for (int c : b.classes) CHECK(seen_classes.insert(c).second);
  }
}

}  // namespace

TEST_CASE("random PK plans have P distinct classes with K samples each") {
  const auto labels = labels_with_counts({5, 6, 4, 8, 5, 7, 4, 6, 5, 9, 4});
  Rng rng(1);
  const EpochPlan plan = pk_random_epoch(labels, 3, 4, rng);
  CHECK(plan.kind == SamplerKind::Random);
  CHECK(plan.batches.size() == 11 / 3);
  check_plan_shape(plan, labels, 3, 4);
  for (const Batch& b : plan.batches) {
    // Every class has >= K samples, so no index repeats.
    CHECK(std::set<std::size_t>(b.indices.begin(), b.indices.end()).size() == b.indices.size());
  }
}

TEST_CASE("small classes are drawn with replacement but keep every sample") {
  const auto labels = labels_with_counts({2, 2, 3});
  Rng rng(2);
  const EpochPlan plan = pk_random_epoch(labels, 3, 5, rng);
  REQUIRE(plan.batches.size() == 1);
  const Batch& b = plan.batches[0];
  for (std::size_t slot = 0; slot < 3; ++slot) {
    const int cls = b.classes[slot];
    std::set<std::size_t> drawn(b.indices.begin() + slot * 5, b.indices.begin() + slot * 5 + 5);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) CHECK(drawn.count(i) == 1);
  }
}

TEST_CASE("plans are a pure function of the rng seed") {
  const auto labels = labels_with_counts(std::vector<std::size_t>(10, 4));
  Rng a(9), b(9), c(10);
  const EpochPlan pa = pk_random_epoch(labels, 2, 2, a);
  CHECK(pa == pk_random_epoch(labels, 2, 2, b));
  CHECK_FALSE(pa == pk_random_epoch(labels, 2, 2, c));
}

TEST_CASE("sampler geometry errors") {
  const auto labels = labels_with_counts({4, 4});
  Rng rng(0);
  CHECK_THROWS_AS(pk_random_epoch(labels, 3, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(pk_random_epoch(labels, 1, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(pk_random_epoch(labels, 2, 1, rng), std::invalid_argument);
}

TEST_CASE("similarity ranking is descending with the anchor first") {
  // Class 0 anchor; 3 is parallel, 1 and 4 tie at 45 degrees, 2 is opposite.
  const Matrix w(5, 2, std::vector<double>{1, 0, 1, 1, -1, 0, 2, 0, 1, -1});
  CHECK(class_similarity_ranking(w, 0) == std::vector<int>{0, 3, 1, 4, 2});
  const auto s = class_similarities(w, 0);
  CHECK(s[3] == doctest::Approx(1.0));
  CHECK(s[2] == doctest::Approx(-1.0));
  // An anchor that is not the most self-similar still comes first.
  CHECK(class_similarity_ranking(w, 3).front() == 3);
  CHECK_THROWS_AS(class_similarity_ranking(w, 5), std::invalid_argument);
  Matrix zero = w;
  zero(2, 0) = 0.0;
  CHECK_THROWS_AS(class_similarity_ranking(zero, 0), std::invalid_argument);
}

TEST_CASE("hard plans group the anchor's nearest classes") {
  const Matrix w(6, 2, std::vector<double>{1, 0, -1, 0.1, 0.9, 0.1, -1, -0.1, 0, 1, 0.1, 1});
  const auto labels = labels_with_counts(std::vector<std::size_t>(6, 3));
  Rng rng(4);
  const EpochPlan plan = hard_batch_epoch_from_anchor(w, labels, 2, 2, 0, rng);
  CHECK(plan.kind == SamplerKind::HardMined);
  CHECK(plan.anchor_class == 0);
  check_plan_shape(plan, labels, 2, 2);
  CHECK(plan.batches[0].classes == std::vector<int>{0, 2});
  CHECK(intra_batch_similarity(w, plan.batches[0]) > 0.9);
}

TEST_CASE("planted partners land in the anchor's batch") {
  SynthSpec spec;
  spec.num_classes = 20;
  const SynthGeometry g = synth_geometry(spec);
  std::vector<int> labels;
  for (int c = 0; c < 20; ++c) labels.insert(labels.end(), 3, c);
  for (int anchor = 0; anchor < 20; ++anchor) {
    if (g.partner[static_cast<std::size_t>(anchor)] < 0) continue;
    Rng rng(static_cast<std::uint64_t>(anchor));
    const EpochPlan plan = hard_batch_epoch_from_anchor(g.centers, labels, 4, 2, anchor, rng);
    const auto& first = plan.batches[0].classes;
    CHECK(std::find(first.begin(), first.end(), g.partner[static_cast<std::size_t>(anchor)]) != first.end());
  }
}

TEST_CASE("with P equal to the class count both samplers cover the same batch") {
  const Matrix w(4, 2, std::vector<double>{1, 0, 0, 1, 1, 1, -1, 0.5});
  const auto labels = labels_with_counts({3, 3, 3, 3});
  Rng a(5), b(5);
  const EpochPlan r = pk_random_epoch(labels, 4, 2, a);
  const EpochPlan h = hard_batch_epoch(w, labels, 4, 2, b);
  REQUIRE(r.batches.size() == 1);
  REQUIRE(h.batches.size() == 1);
  CHECK(intra_batch_similarity(w, r.batches[0]) == intra_batch_similarity(w, h.batches[0]));
  // Same per-class draws regardless of class order.
  std::map<int, std::vector<std::size_t>> rd, hd;
  for (std::size_t i = 0; i < 8; ++i) {
    rd[r.batches[0].classes[i / 2]].push_back(r.batches[0].indices[i]);
    hd[h.batches[0].classes[i / 2]].push_back(h.batches[0].indices[i]);
  }
  CHECK(rd == hd);
}

TEST_CASE("warmup schedule and intra-batch similarity") {
  CHECK(schedule(0, 1) == SamplerKind::Random);
  CHECK(schedule(1, 1) == SamplerKind::HardMined);
  CHECK(schedule(0, 0) == SamplerKind::HardMined);
  CHECK(schedule(4, 5) == SamplerKind::Random);
  CHECK(to_string(SamplerKind::HardMined) == "hard");
  const Matrix w(3, 2, std::vector<double>{1, 0, 0, 1, 1, 1});
  Batch b;
  b.classes = {2, 0, 1};
  const double expected = (0.0 + std::sqrt(0.5) + std::sqrt(0.5)) / 3.0;
  CHECK(intra_batch_similarity(w, b) == doctest::Approx(expected));
  b.classes = {1, 1};
  CHECK_THROWS_AS(intra_batch_similarity(w, b), std::invalid_argument);
}
