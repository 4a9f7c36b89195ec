#pragma once

// Rationale-guided rescoring of a query's retrieved candidates: cosine
// similarity to the rationale embedding, per-query min-max normalization of
// both score families, and linear interpolation with weight alpha.

#include <span>
#include <vector>

#include "ralign/retrieval.hpp"
#include "ralign/types.hpp"

namespace ralign {

/// u.v / (|u||v|), clamped to [-1, 1]. Throws ValidationError on a dim
/// mismatch or a zero vector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);
inline double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine_similarity(u.values(), v.values());
}

/// (s - min) / (max - min); all 0.5 when max == min. Throws ValidationError on
/// empty or non-finite input.
std::vector<double> min_max_normalize(std::span<const double> scores);

/// alpha * norm_rationale + (1 - alpha) * norm_retrieval. All inputs in [0, 1].
double fuse_scores(double norm_rationale, double norm_retrieval, double alpha);

/// Scores every retrieved doc against the rationale, normalizes both score
/// families within this candidate set, fuses with `alpha`, and returns the
/// docs sorted by fused score (ties: ascending doc_id) with ranks 1..k.
/// `doc_vecs[i]` is the embedding of `retrieved.docs[i]`.
std::vector<ScoredDoc> rank_by_fusion(const RetrievedSet& retrieved, const EmbeddingVector& rationale_vec,
                                      std::span<const EmbeddingVector> doc_vecs, double alpha);

/// Same, reading document embeddings from the index.
std::vector<ScoredDoc> rank_by_fusion(const RetrievedSet& retrieved, const EmbeddingVector& rationale_vec,
                                      const CorpusIndex& index, double alpha);

/// Dump record {"query_id","alpha","docs":[{"doc_id","retrieval_score","rationale_score","fused","rank"}]}.
Json ranking_to_json(const std::string& query_id, double alpha, const std::vector<ScoredDoc>& ranked);
std::vector<ScoredDoc> ranking_from_json(const Json& j, std::string* query_id = nullptr);

}  // namespace ralign
