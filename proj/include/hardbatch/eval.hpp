#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hardbatch/common.hpp"

namespace hardbatch {

struct EvalResult {
  double map = 0.0;
  std::vector<double> cmc;  // cmc[r] = fraction of queries matched within rank r + 1
  std::vector<double> per_query_ap;
};

/// k-reciprocal re-ranking parameters. lambda_rr weighs the original distance
/// against the Jaccard distance.
struct RerankParams {
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda_rr = 0.3;

  void validate() const;
};

/// Identity and scene labels for one side of a retrieval split.
struct RetrievalMeta {
  std::vector<int> class_ids;
  std::vector<int> scene_ids;
};

/// AP = (1/R) * sum over relevant positions k of precision@k.
double compute_ap(std::span<const int> relevance);

/// Ranks the gallery for each query by ascending distance (Euclidean, or the
/// re-ranked distance when `rerank` is given), skipping gallery items with the
/// query's class AND scene. Equal distances keep ascending gallery order.
///
/// k1 is capped at gallery size - 1 and k2 at k1 before re-ranking.
EvalResult evaluate(const Matrix& query, const RetrievalMeta& query_meta, const Matrix& gallery,
                    const RetrievalMeta& gallery_meta,
                    const std::optional<RerankParams>& rerank = std::nullopt);

/// Same as evaluate() with a precomputed Q x G distance matrix.
EvalResult evaluate_distances(const Matrix& distances, const RetrievalMeta& query_meta,
                              const RetrievalMeta& gallery_meta);

/// k-reciprocal encoding over the joint query+gallery set: reciprocal
/// neighbour sets with expansion, Gaussian-weighted encodings, local query
/// expansion over k2 neighbours, Jaccard distance. Returns
///   lambda_rr * d_orig + (1 - lambda_rr) * d_jaccard
/// where d_orig is squared Euclidean distance divided by its row maximum.
/// Requires k1 < gallery size.
Matrix k_reciprocal_rerank(const Matrix& query, const Matrix& gallery, const RerankParams& params);

}  // namespace hardbatch
