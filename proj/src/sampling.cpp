#include "hardbatch/sampling.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace hardbatch {

namespace {

using ClassIndex = std::map<int, std::vector<std::size_t>>;

ClassIndex index_by_class(std::span<const int> labels) {
  ClassIndex by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  return by_class;
}

void check_geometry(const ClassIndex& by_class, std::size_t P, std::size_t K) {
  if (P < 2) throw std::invalid_argument("sampler: P must be >= 2");
  if (K < 2) throw std::invalid_argument("sampler: K must be >= 2");
  if (by_class.size() < P) {
    throw std::invalid_argument("sampler: only " + std::to_string(by_class.size()) +
                                " classes available, P = " + std::to_string(P));
  }
}

/// Without replacement when the class has >= K samples. Otherwise every
/// sample once plus K - n draws with replacement, then shuffled.
std::vector<std::size_t> draw_k(const std::vector<std::size_t>& pool, std::size_t K, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(K);
  if (pool.size() >= K) {
    std::vector<std::size_t> work = pool;
    for (std::size_t i = 0; i < K; ++i) {
      const std::size_t j = i + rng.next_int(work.size() - i);
      std::swap(work[i], work[j]);
      out.push_back(work[i]);
    }
    return out;
  }
  out = pool;
  while (out.size() < K) out.push_back(pool[rng.next_int(pool.size())]);
  rng.shuffle(out);
  return out;
}

EpochPlan build_plan(const std::vector<int>& class_order, const ClassIndex& by_class,
                     std::size_t P, std::size_t K, std::uint64_t draw_seed) {
  EpochPlan plan;
  for (std::size_t start = 0; start + P <= class_order.size(); start += P) {
    Batch b;
    for (std::size_t k = start; k < start + P; ++k) {
      const int cls = class_order[k];
      Rng class_rng(derive_seed(draw_seed, static_cast<std::uint64_t>(cls)));
      const auto drawn = draw_k(by_class.at(cls), K, class_rng);
      b.indices.insert(b.indices.end(), drawn.begin(), drawn.end());
      b.classes.push_back(cls);
    }
    plan.batches.push_back(std::move(b));
  }
  return plan;
}

void check_anchor(const Matrix& w, int anchor_class) {
  if (anchor_class < 0 || static_cast<std::size_t>(anchor_class) >= w.rows()) {
    throw std::invalid_argument("class_similarity_ranking: anchor " +
                                std::to_string(anchor_class) + " out of range [0," +
                                std::to_string(w.rows()) + ")");
  }
}

EpochPlan hard_plan(const Matrix& class_weights, const ClassIndex& by_class, std::size_t P,
                    std::size_t K, int anchor, std::uint64_t draw_seed) {
  std::vector<int> order;
  for (int cls : class_similarity_ranking(class_weights, anchor)) {
    if (by_class.contains(cls)) order.push_back(cls);
  }
  EpochPlan plan = build_plan(order, by_class, P, K, draw_seed);
  plan.kind = SamplerKind::HardMined;
  plan.anchor_class = anchor;
  return plan;
}

}  // namespace

std::string_view to_string(SamplerKind kind) {
  return kind == SamplerKind::Random ? "random" : "hard";
}

EpochPlan pk_random_epoch(std::span<const int> labels, std::size_t P, std::size_t K, Rng& rng) {
  const ClassIndex by_class = index_by_class(labels);
  check_geometry(by_class, P, K);
  const std::uint64_t draw_seed = rng.next_u64();
  std::vector<int> order;
  for (const auto& [cls, _] : by_class) order.push_back(cls);
  rng.shuffle(order);
  EpochPlan plan = build_plan(order, by_class, P, K, draw_seed);
  plan.kind = SamplerKind::Random;
  return plan;
}

std::vector<double> class_similarities(const Matrix& class_weights, int anchor_class) {
  check_anchor(class_weights, anchor_class);
  const auto anchor = class_weights.row(static_cast<std::size_t>(anchor_class));
  std::vector<double> s(class_weights.rows());
  for (std::size_t c = 0; c < class_weights.rows(); ++c) {
    try {
      s[c] = cosine_similarity(anchor, class_weights.row(c));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("class_similarity_ranking: zero-norm weight row " +
                                  std::to_string(norm(anchor) == 0.0 ? anchor_class
                                                                     : static_cast<int>(c)));
    }
  }
  return s;
}

std::vector<int> class_similarity_ranking(const Matrix& class_weights, int anchor_class) {
  const std::vector<double> s = class_similarities(class_weights, anchor_class);
  std::vector<int> order;
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (static_cast<int>(c) != anchor_class) order.push_back(static_cast<int>(c));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
  });
  order.insert(order.begin(), anchor_class);
  return order;
}

EpochPlan hard_batch_epoch(const Matrix& class_weights, std::span<const int> labels,
                           std::size_t P, std::size_t K, Rng& rng) {
  const ClassIndex by_class = index_by_class(labels);
  check_geometry(by_class, P, K);
  const std::uint64_t draw_seed = rng.next_u64();
  auto it = by_class.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(rng.next_int(by_class.size())));
  return hard_plan(class_weights, by_class, P, K, it->first, draw_seed);
}

EpochPlan hard_batch_epoch_from_anchor(const Matrix& class_weights, std::span<const int> labels,
                                       std::size_t P, std::size_t K, int anchor_class, Rng& rng) {
  const ClassIndex by_class = index_by_class(labels);
  check_geometry(by_class, P, K);
  const std::uint64_t draw_seed = rng.next_u64();
  return hard_plan(class_weights, by_class, P, K, anchor_class, draw_seed);
}

SamplerKind schedule(std::size_t epoch_index, std::size_t warmup_epochs) {
  return epoch_index < warmup_epochs ? SamplerKind::Random : SamplerKind::HardMined;
}

double intra_batch_similarity(const Matrix& class_weights, const Batch& batch) {
  const std::set<int> distinct(batch.classes.begin(), batch.classes.end());
  if (distinct.size() < 2) {
    throw std::invalid_argument("intra_batch_similarity: batch needs >= 2 classes");
  }
  const std::vector<int> cls(distinct.begin(), distinct.end());
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    for (std::size_t j = i + 1; j < cls.size(); ++j) {
      sum += cosine_similarity(class_weights.row(static_cast<std::size_t>(cls[i])),
                               class_weights.row(static_cast<std::size_t>(cls[j])));
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

}  // namespace hardbatch
