#include "hardbatch/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace hardbatch {

namespace {

LossOutput cross_entropy(const Matrix& logits, std::span<const int> labels, const char* who) {
  if (labels.size() != logits.rows()) {
    throw std::invalid_argument(std::string(who) + ": label count " +
                                std::to_string(labels.size()) + " != batch " +
                                std::to_string(logits.rows()));
  }
  if (logits.rows() == 0) throw std::invalid_argument(std::string(who) + ": empty batch");
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  LossOutput out{0.0, Matrix(n, c)};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::invalid_argument(std::string(who) + ": label " + std::to_string(y) +
                                  " out of range [0," + std::to_string(c) + ")");
    }
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    out.value += log_z - row[static_cast<std::size_t>(y)];
    for (std::size_t k = 0; k < c; ++k) {
      out.grad(i, k) = std::exp(row[k] - log_z) / static_cast<double>(n);
    }
    out.grad(i, static_cast<std::size_t>(y)) -= 1.0 / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

}  // namespace

LossOutput softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  return cross_entropy(logits, labels, "softmax_cross_entropy");
}

LossOutput scene_adversarial_loss(const Matrix& scene_logits, std::span<const int> scene_labels) {
  return cross_entropy(scene_logits, scene_labels, "scene_adversarial_loss");
}

TripletResult batch_hard_triplet(const Matrix& embeddings, std::span<const int> labels,
                                 double margin) {
  const std::size_t n = embeddings.rows();
  if (labels.size() != n) {
    throw std::invalid_argument("batch_hard_triplet: label count != batch size");
  }
  std::map<int, std::size_t> counts;
  for (int y : labels) ++counts[y];
  if (counts.size() < 2) {
    throw std::invalid_argument("batch_hard_triplet: batch must contain >= 2 classes");
  }
  for (const auto& [cls, cnt] : counts) {
    if (cnt < 2) {
      throw std::invalid_argument("batch_hard_triplet: class " + std::to_string(cls) +
                                  " has a single sample in the batch");
    }
  }

  // Direct differences rather than the norm expansion, so duplicate
  // embeddings sit at exactly zero and ties are exact.
  Matrix dist(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < embeddings.cols(); ++k) {
        const double d = embeddings(a, k) - embeddings(b, k);
        s += d * d;
      }
      dist(a, b) = dist(b, a) = std::sqrt(s);
    }
  }
  TripletResult r;
  r.loss.grad = Matrix(n, embeddings.cols());
  r.hardest_positive.resize(n);
  r.hardest_negative.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::size_t active = 0;

  auto add_pair_grad = [&](std::size_t a, std::size_t b, double dist, double scale) {
    if (dist == 0.0) return;
    const double s = scale / dist;
    for (std::size_t k = 0; k < embeddings.cols(); ++k) {
      const double diff = s * (embeddings(a, k) - embeddings(b, k));
      r.loss.grad(a, k) += diff;
      r.loss.grad(b, k) -= diff;
    }
  };

  for (std::size_t a = 0; a < n; ++a) {
    std::size_t pos = n, neg = n;
    double d_pos = -1.0, d_neg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = dist(a, j);
      if (labels[j] == labels[a]) {
        if (d > d_pos) {
          d_pos = d;
          pos = j;
        }
      } else if (neg == n || d < d_neg) {
        d_neg = d;
        neg = j;
      }
    }
    r.hardest_positive[a] = pos;
    r.hardest_negative[a] = neg;
    r.stats.mean_hard_pos_dist += d_pos * inv_n;
    r.stats.mean_hard_neg_dist += d_neg * inv_n;
    const double hinge = margin + d_pos - d_neg;
    if (hinge > 0.0) {
      ++active;
      r.loss.value += hinge;
      add_pair_grad(a, pos, d_pos, inv_n);
      add_pair_grad(a, neg, d_neg, -inv_n);
    }
  }
  r.loss.value *= inv_n;
  r.stats.active_fraction = static_cast<double>(active) * inv_n;
  return r;
}

double total_loss(double l_id, double l_triplet, double l_adv, double triplet_weight,
                  double lambda) {
  if (lambda < 0.0 || triplet_weight < 0.0) {
    throw std::invalid_argument("total_loss: lambda and triplet_weight must be >= 0");
  }
  return l_id + triplet_weight * l_triplet - lambda * l_adv;
}

}  // namespace hardbatch
