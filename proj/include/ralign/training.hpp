#pragma once

// Bilinear reranker head over frozen embeddings,
//   phi(q, d) = e_q^T W e_d + b,
// trained with InfoNCE over one positive and N negatives per query, using
// analytic gradients and Adam with decoupled weight decay on W.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ralign/config.hpp"
#include "ralign/sampling.hpp"
#include "ralign/types.hpp"

namespace ralign {

class RerankerHead {
 public:
  RerankerHead() = default;
  /// Throws ValidationError on a size mismatch, non-finite entries, or tau <= 0.
  RerankerHead(std::size_t dim, std::vector<double> weights, double bias, double tau);

  /// W = I, b = 0: scores equal the cosine of unit inputs.
  static RerankerHead identity(std::size_t dim, double tau);

  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> mutable_weights() noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  void set_bias(double b) noexcept { bias_ = b; }
  double tau() const noexcept { return tau_; }

  bool operator==(const RerankerHead&) const = default;

  /// Checkpoint {"dim","tau","b","W": row-major, "config_digest"}.
  Json to_json(const std::string& config_digest = {}) const;
  static RerankerHead from_json(const Json& j);
  void save(const std::filesystem::path& path, const std::string& config_digest = {}) const;
  static RerankerHead load(const std::filesystem::path& path);

 private:
  std::size_t dim_ = 0;
  std::vector<double> weights_;  // dim x dim, row-major
  double bias_ = 0.0;
  double tau_ = 0.05;
};

/// e_q^T W e_d + b.
double head_score(const RerankerHead& head, std::span<const double> e_q, std::span<const double> e_d);

/// -log( exp(pos/tau) / (exp(pos/tau) + sum_i exp(neg_i/tau)) ), computed with
/// a max shift. Throws ValidationError for empty negatives or tau <= 0.
double info_nce_loss(double phi_pos, std::span<const double> phi_negs, double tau);

struct InfoNceGradients {
  double loss = 0.0;
  double phi_pos = 0.0;
  std::vector<double> phi_negs;
  double dphi_pos = 0.0;            // (p_pos - 1) / tau
  std::vector<double> dphi_negs;    // p_neg_i / tau
  std::vector<double> grad_weights;  // dim x dim
  double grad_bias = 0.0;           // zero: the softmax gradients sum to zero
};

InfoNceGradients info_nce_gradients(const RerankerHead& head, std::span<const double> e_q,
                                    std::span<const double> e_pos, std::span<const EmbeddingVector> e_negs);

using EmbeddingMap = std::unordered_map<std::string, EmbeddingVector>;

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_top1 = 0.0;
  long steps = 0;

  Json to_json() const;
};

struct TrainResult {
  RerankerHead head;
  TrainReport report;
};

/// Identity warm start, one Adam step per group per epoch, group order
/// reshuffled each epoch from config.seed. Query vectors are keyed by
/// query_id, document vectors by doc_id; both are unit-normalized on use.
TrainResult train(const std::vector<TrainingGroup>& groups, const EmbeddingMap& query_vecs,
                  const EmbeddingMap& doc_vecs, const PipelineConfig& config);

struct Candidate {
  std::string doc_id;
  std::span<const double> embedding;
};

struct RankedId {
  std::string doc_id;
  double score = 0.0;
};

/// Candidates scored by `score`, sorted descending (ties: ascending doc_id),
/// truncated to min(k2, |candidates|).
std::vector<RankedId> rank_candidates(std::span<const Candidate> candidates, int k2,
                                      const std::function<double(std::span<const double>)>& score);

/// Top-k2 ids by head_score.
std::vector<std::string> rerank_with_head(const RerankerHead& head, std::span<const double> e_q,
                                          std::span<const Candidate> candidates, int k2);

/// Top-k2 ids by the base encoder's cosine (dot of unit vectors).
std::vector<std::string> rerank_by_cosine(std::span<const double> e_q, std::span<const Candidate> candidates, int k2);

}  // namespace ralign
