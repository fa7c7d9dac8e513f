#pragma once
// Independent reference implementations used only by tests. Each one is the
// slow, obvious version of a library routine: nested loops, no shared helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hardbatch/common.hpp"
#include "hardbatch/eval.hpp"

namespace oracle {

using hardbatch::Matrix;

inline double row_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double d = a(i, k) - b(j, k);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Central difference of f with respect to every entry of `values`.
inline std::vector<double> central_difference(std::span<double> values,
                                              const std::function<double()>& f, double h) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f();
    values[i] = saved - h;
    const double down = f();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

struct TripletEnumeration {
  double loss = 0.0;
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};

/// Every (anchor, positive, negative) triple is scored; per anchor the triple
/// with the largest margin + d(a,p) - d(a,n) wins, first one found on ties.
inline TripletEnumeration enumerate_triplets(const Matrix& emb, std::span<const int> labels,
                                             double margin) {
  const std::size_t n = emb.rows();
  TripletEnumeration out;
  out.positive.assign(n, n);
  out.negative.assign(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        const double v = margin + row_distance(emb, a, emb, p) - row_distance(emb, a, emb, q);
        if (v > best) {
          best = v;
          out.positive[a] = p;
          out.negative[a] = q;
        }
      }
    }
    out.loss += std::max(0.0, best);
  }
  out.loss /= static_cast<double>(n);
  return out;
}

/// Precision at every relevant rank, counted from scratch each time.
inline double brute_force_ap(std::span<const int> relevance) {
  double sum = 0.0;
  std::size_t relevant = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k] == 0) continue;
    ++relevant;
    std::size_t hits = 0;
    for (std::size_t j = 0; j <= k; ++j) hits += relevance[j] != 0;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(relevant);
}

struct Ranking {
  double map = 0.0;
  std::vector<double> cmc;
};

/// Sort (distance, gallery index) pairs per query, drop same-id-same-scene
/// items, then scan.
inline Ranking sort_and_scan(const Matrix& dist, const hardbatch::RetrievalMeta& qm,
                             const hardbatch::RetrievalMeta& gm) {
  const std::size_t nq = dist.rows(), ng = dist.cols();
  Ranking r;
  r.cmc.assign(ng, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<std::pair<double, std::size_t>> items;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gm.class_ids[g] == qm.class_ids[q] && gm.scene_ids[g] == qm.scene_ids[q]) continue;
      items.emplace_back(dist(q, g), g);
    }
    std::sort(items.begin(), items.end());
    std::vector<int> rel;
    for (const auto& [d, g] : items) rel.push_back(gm.class_ids[g] == qm.class_ids[q] ? 1 : 0);
    r.map += brute_force_ap(rel);
    const auto first = std::find(rel.begin(), rel.end(), 1) - rel.begin();
    for (std::size_t k = static_cast<std::size_t>(first); k < ng; ++k) r.cmc[k] += 1.0;
  }
  r.map /= static_cast<double>(nq);
  for (double& v : r.cmc) v /= static_cast<double>(nq);
  return r;
}

inline Matrix naive_distances(const Matrix& a, const Matrix& b) {
  Matrix d(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) d(i, j) = row_distance(a, i, b, j);
  return d;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace oracle
