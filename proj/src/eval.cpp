#include "hardbatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>

namespace hardbatch {

namespace {

void check_meta(const RetrievalMeta& meta, std::size_t rows, const char* side) {
  if (meta.class_ids.size() != rows || meta.scene_ids.size() != rows) {
    throw std::invalid_argument(std::string("evaluate: ") + side +
                                " metadata length does not match embeddings");
  }
}

/// Row-wise argsort, ties by ascending column.
std::vector<std::vector<std::size_t>> argsort_rows(const Matrix& d) {
  std::vector<std::vector<std::size_t>> ranks(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    auto& r = ranks[i];
    r.resize(d.cols());
    std::iota(r.begin(), r.end(), std::size_t{0});
    std::stable_sort(r.begin(), r.end(),
                     [&](std::size_t a, std::size_t b) { return d(i, a) < d(i, b); });
  }
  return ranks;
}

/// Items among the k+1 nearest of i that also have i among their k+1 nearest.
std::vector<std::size_t> k_reciprocal_set(const std::vector<std::vector<std::size_t>>& ranks,
                                          std::size_t i, std::size_t k) {
  std::vector<std::size_t> out;
  const auto& fwd = ranks[i];
  const std::size_t depth = std::min(k + 1, fwd.size());
  for (std::size_t a = 0; a < depth; ++a) {
    const std::size_t cand = fwd[a];
    const auto& back = ranks[cand];
    if (std::find(back.begin(), back.begin() + static_cast<std::ptrdiff_t>(depth), i) !=
        back.begin() + static_cast<std::ptrdiff_t>(depth)) {
      out.push_back(cand);
    }
  }
  return out;
}

}  // namespace

void RerankParams::validate() const {
  if (k2 < 1 || k1 < k2) throw std::invalid_argument("rerank: need k1 >= k2 >= 1");
  if (!(lambda_rr >= 0.0 && lambda_rr <= 1.0)) {
    throw std::invalid_argument("rerank: lambda_rr must be in [0,1]");
  }
}

double compute_ap(std::span<const int> relevance) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k] != 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) throw std::invalid_argument("compute_ap: no relevant items");
  return sum / static_cast<double>(hits);
}

EvalResult evaluate_distances(const Matrix& distances, const RetrievalMeta& query_meta,
                              const RetrievalMeta& gallery_meta) {
  const std::size_t nq = distances.rows();
  const std::size_t ng = distances.cols();
  check_meta(query_meta, nq, "query");
  check_meta(gallery_meta, ng, "gallery");
  if (nq == 0) throw std::invalid_argument("evaluate: no queries");

  EvalResult res;
  res.cmc.assign(ng, 0.0);
  std::vector<std::size_t> order(ng);
  std::vector<int> relevance;
  for (std::size_t q = 0; q < nq; ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return distances(q, a) < distances(q, b);
    });
    relevance.clear();
    for (std::size_t g : order) {
      const bool same_id = gallery_meta.class_ids[g] == query_meta.class_ids[q];
      if (same_id && gallery_meta.scene_ids[g] == query_meta.scene_ids[q]) continue;
      relevance.push_back(same_id ? 1 : 0);
    }
    const auto first = std::find(relevance.begin(), relevance.end(), 1);
    if (first == relevance.end()) {
      throw std::invalid_argument("evaluate: query " + std::to_string(q) +
                                  " has no cross-scene match in the gallery");
    }
    res.per_query_ap.push_back(compute_ap(relevance));
    for (auto r = static_cast<std::size_t>(first - relevance.begin()); r < ng; ++r) {
      res.cmc[r] += 1.0;
    }
  }
  for (double& c : res.cmc) c /= static_cast<double>(nq);
  res.map = std::accumulate(res.per_query_ap.begin(), res.per_query_ap.end(), 0.0) /
            static_cast<double>(nq);
  return res;
}

EvalResult evaluate(const Matrix& query, const RetrievalMeta& query_meta, const Matrix& gallery,
                    const RetrievalMeta& gallery_meta, const std::optional<RerankParams>& rerank) {
  check_meta(query_meta, query.rows(), "query");
  check_meta(gallery_meta, gallery.rows(), "gallery");
  if (!rerank) {
    Matrix d = pairwise_sq_euclidean(query, gallery);
    for (double& v : d.values()) v = std::sqrt(v);
    return evaluate_distances(d, query_meta, gallery_meta);
  }
  if (gallery.rows() < 2) throw std::invalid_argument("evaluate: re-ranking needs >= 2 gallery items");
  RerankParams p = *rerank;
  p.k1 = std::min(p.k1, gallery.rows() - 1);
  p.k2 = std::min(p.k2, p.k1);
  return evaluate_distances(k_reciprocal_rerank(query, gallery, p), query_meta, gallery_meta);
}

Matrix k_reciprocal_rerank(const Matrix& query, const Matrix& gallery, const RerankParams& params) {
  params.validate();
  if (query.cols() != gallery.cols()) {
    throw std::invalid_argument("k_reciprocal_rerank: embedding width mismatch");
  }
  if (params.k1 >= gallery.rows()) {
    throw std::invalid_argument("k_reciprocal_rerank: k1 = " + std::to_string(params.k1) +
                                " must be < gallery size " + std::to_string(gallery.rows()));
  }
  const std::size_t nq = query.rows();
  const std::size_t n = nq + gallery.rows();
  Matrix all(n, query.cols());
  for (std::size_t i = 0; i < nq; ++i) std::copy_n(query.row(i).begin(), query.cols(), all.row(i).begin());
  for (std::size_t i = 0; i < gallery.rows(); ++i)
    std::copy_n(gallery.row(i).begin(), gallery.cols(), all.row(nq + i).begin());

  Matrix orig = pairwise_sq_euclidean(all, all);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = orig.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    if (mx > 0.0)
      for (double& v : row) v /= mx;
  }
  const auto ranks = argsort_rows(orig);

  // Gaussian-weighted k-reciprocal encodings.
  Matrix enc(n, n);
  const auto half = static_cast<std::size_t>(std::nearbyint(static_cast<double>(params.k1) / 2.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto recip = k_reciprocal_set(ranks, i, params.k1);
    const std::set<std::size_t> recip_set(recip.begin(), recip.end());
    std::set<std::size_t> expansion(recip.begin(), recip.end());
    for (std::size_t cand : recip) {
      const auto cand_recip = k_reciprocal_set(ranks, cand, half);
      const auto overlap = static_cast<double>(std::count_if(
          cand_recip.begin(), cand_recip.end(), [&](std::size_t c) { return recip_set.contains(c); }));
      if (overlap > 2.0 / 3.0 * static_cast<double>(cand_recip.size())) {
        expansion.insert(cand_recip.begin(), cand_recip.end());
      }
    }
    double total = 0.0;
    for (std::size_t e : expansion) total += std::exp(-orig(i, e));
    for (std::size_t e : expansion) enc(i, e) = std::exp(-orig(i, e)) / total;
  }

  // Local query expansion.
  if (params.k2 != 1) {
    Matrix expanded(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      auto out = expanded.row(i);
      for (std::size_t a = 0; a < params.k2; ++a) {
        const auto src = enc.row(ranks[i][a]);
        for (std::size_t k = 0; k < n; ++k) out[k] += src[k];
      }
      for (double& v : out) v /= static_cast<double>(params.k2);
    }
    enc = std::move(expanded);
  }

  Matrix final_dist(nq, gallery.rows());
  for (std::size_t q = 0; q < nq; ++q) {
    const auto vq = enc.row(q);
    for (std::size_t g = 0; g < gallery.rows(); ++g) {
      const auto vg = enc.row(nq + g);
      double shared = 0.0;
      for (std::size_t k = 0; k < n; ++k) shared += std::min(vq[k], vg[k]);
      const double jaccard = 1.0 - shared / (2.0 - shared);
      final_dist(q, g) = jaccard * (1.0 - params.lambda_rr) + orig(q, nq + g) * params.lambda_rr;
    }
  }
  return final_dist;
}

}  // namespace hardbatch
