#include "ralign/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ralign/error.hpp"
#include "ralign/simd.hpp"

namespace ralign {

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ValidationError("cosine: dim mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  }
  const double uu = simd::dot(u, u);
  const double vv = simd::dot(v, v);
  if (!(uu > 0.0) || !(vv > 0.0)) throw ValidationError("cosine: zero vector");
  const double c = simd::dot(u, v) / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

std::vector<double> min_max_normalize(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("min_max_normalize: empty input");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("min_max_normalize: non-finite value");
  }
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out(scores.size(), 0.5);
  if (hi == lo) return out;
  const double span = hi - lo;
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - lo) / span;
  return out;
}

double fuse_scores(double norm_rationale, double norm_retrieval, double alpha) {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(norm_rationale) || !in_unit(norm_retrieval)) throw ValidationError("fuse_scores: score outside [0,1]");
  if (!in_unit(alpha)) throw ValidationError("fuse_scores: alpha outside [0,1]");
  return alpha * norm_rationale + (1.0 - alpha) * norm_retrieval;
}

std::vector<ScoredDoc> rank_by_fusion(const RetrievedSet& retrieved, const EmbeddingVector& rationale_vec,
                                      std::span<const EmbeddingVector> doc_vecs, double alpha) {
  const auto n = retrieved.docs.size();
  if (n == 0) return {};
  if (doc_vecs.size() != n) {
    throw ValidationError("rank_by_fusion: " + std::to_string(doc_vecs.size()) + " embeddings for " +
                          std::to_string(n) + " retrieved docs");
  }
  std::vector<double> rationale_scores(n);
  std::vector<double> retrieval_scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    rationale_scores[i] = cosine_similarity(doc_vecs[i], rationale_vec);
    retrieval_scores[i] = retrieved.docs[i].retrieval_score;
  }
  const auto norm_rat = min_max_normalize(rationale_scores);
  const auto norm_ret = min_max_normalize(retrieval_scores);

  std::vector<ScoredDoc> out(retrieved.docs.begin(), retrieved.docs.end());
  for (std::size_t i = 0; i < n; ++i) {
    out[i].rationale_score = rationale_scores[i];
    out[i].norm_rationale = norm_rat[i];
    out[i].norm_retrieval = norm_ret[i];
    out[i].fused = fuse_scores(norm_rat[i], norm_ret[i], alpha);
  }
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (*a.fused != *b.fused) return *a.fused > *b.fused;
    return a.doc_id < b.doc_id;
  });
  for (std::size_t i = 0; i < n; ++i) out[i].rank = static_cast<int>(i + 1);
  return out;
}

std::vector<ScoredDoc> rank_by_fusion(const RetrievedSet& retrieved, const EmbeddingVector& rationale_vec,
                                      const CorpusIndex& index, double alpha) {
  std::vector<EmbeddingVector> vecs;
  vecs.reserve(retrieved.docs.size());
  for (const auto& d : retrieved.docs) {
    const auto row = index.row(d.doc_id);
    if (row.empty()) throw ValidationError("rank_by_fusion: missing embedding for " + d.doc_id);
    vecs.emplace_back(std::vector<double>(row.begin(), row.end()));
  }
  return rank_by_fusion(retrieved, rationale_vec, vecs, alpha);
}

Json ranking_to_json(const std::string& query_id, double alpha, const std::vector<ScoredDoc>& ranked) {
  Json docs = Json::array();
  for (const auto& d : ranked) docs.push_back(Json(d));
  return Json{{"query_id", query_id}, {"alpha", alpha}, {"docs", std::move(docs)}};
}

std::vector<ScoredDoc> ranking_from_json(const Json& j, std::string* query_id) {
  try {
    if (query_id) *query_id = j.at("query_id").get<std::string>();
    std::vector<ScoredDoc> out;
    for (const auto& d : j.at("docs")) {
      ScoredDoc s;
      s.doc_id = d.at("doc_id").get<std::string>();
      s.retrieval_score = d.at("retrieval_score").get<double>();
      if (d.contains("rationale_score") && !d["rationale_score"].is_null()) {
        s.rationale_score = d["rationale_score"].get<double>();
      }
      if (d.contains("fused") && !d["fused"].is_null()) s.fused = d["fused"].get<double>();
      s.rank = d.at("rank").get<int>();
      out.push_back(std::move(s));
    }
    return out;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("ranking record: ") + e.what());
  }
}

}  // namespace ralign
