#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hardbatch/common.hpp"

namespace hardbatch {

enum class SamplerKind { Random, HardMined };

std::string_view to_string(SamplerKind kind);

/// P classes, K sample indices each, grouped by class in `classes` order.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<int> classes;

  bool operator==(const Batch&) const = default;
};

struct EpochPlan {
  std::vector<Batch> batches;
  SamplerKind kind = SamplerKind::Random;
  std::optional<int> anchor_class;  // HardMined only

  bool operator==(const EpochPlan&) const = default;
};

/// Uniformly shuffled class order, consecutive groups of P classes, K draws
/// per class. A trailing group of fewer than P classes is dropped.
///
/// Both samplers consume one u64 from `rng` first and use it to seed the
/// per-class K-draws (seeded by class id), so the same rng state gives the
/// same draws per class regardless of class order.
EpochPlan pk_random_epoch(std::span<const int> labels, std::size_t P, std::size_t K, Rng& rng);

/// cos(W_anchor, W_c) for every class c.
std::vector<double> class_similarities(const Matrix& class_weights, int anchor_class);

/// All C classes ordered by cosine similarity to the anchor, descending.
/// The anchor is always first; other ties go to the lower class id.
std::vector<int> class_similarity_ranking(const Matrix& class_weights, int anchor_class);

/// Anchor class drawn uniformly from the classes present in `labels`, then
/// the similarity ranking (restricted to present classes) is cut into
/// consecutive groups of P.
EpochPlan hard_batch_epoch(const Matrix& class_weights, std::span<const int> labels,
                           std::size_t P, std::size_t K, Rng& rng);

/// As hard_batch_epoch with a fixed anchor class.
EpochPlan hard_batch_epoch_from_anchor(const Matrix& class_weights, std::span<const int> labels,
                                       std::size_t P, std::size_t K, int anchor_class, Rng& rng);

/// Random for epoch_index < warmup_epochs, HardMined afterwards.
SamplerKind schedule(std::size_t epoch_index, std::size_t warmup_epochs);

/// Mean pairwise cosine over the batch's distinct classes (ascending id order).
double intra_batch_similarity(const Matrix& class_weights, const Batch& batch);

}  // namespace hardbatch
