#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hardbatch/common.hpp"

namespace hardbatch {

struct LossOutput {
  double value = 0.0;
  Matrix grad;  // same shape as the loss input
};

struct TripletStats {
  double active_fraction = 0.0;  // anchors with strictly positive loss
  double mean_hard_pos_dist = 0.0;
  double mean_hard_neg_dist = 0.0;
};

struct TripletResult {
  LossOutput loss;
  TripletStats stats;
  std::vector<std::size_t> hardest_positive;  // per anchor
  std::vector<std::size_t> hardest_negative;  // per anchor
};

/// Mean over the batch of -log softmax(logits)_label.
/// grad = (softmax - onehot) / batch.
LossOutput softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Batch-hard triplet loss with Euclidean distances:
///   loss_a = max(0, margin + max_p d(a,p) - min_n d(a,n)),  value = mean_a loss_a
/// Positives exclude the anchor itself. Ties go to the lowest index. The
/// gradient flows only through each anchor's selected pair; d = 0 contributes
/// a zero subgradient.
///
/// Throws if any class in the batch has a single sample or only one class is
/// present.
TripletResult batch_hard_triplet(const Matrix& embeddings, std::span<const int> labels,
                                 double margin);

/// Scene classifier cross-entropy over T scene types. The gradient is the
/// plain minimization gradient; gradient reversal is applied by the model.
LossOutput scene_adversarial_loss(const Matrix& scene_logits, std::span<const int> scene_labels);

/// l_id + triplet_weight * l_triplet - lambda * l_adv
double total_loss(double l_id, double l_triplet, double l_adv, double triplet_weight,
                  double lambda);

}  // namespace hardbatch
