#pragma once

// Contrastive pair mining ("top-k shifted by n"): the top fused document is the
// positive; negatives are drawn uniformly without replacement from documents
// ranked below n, using a counter-based generator keyed per query.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ralign/config.hpp"
#include "ralign/types.hpp"

namespace ralign {

/// Counter-based 64-bit generator: value(key, i) depends only on (key, i).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  std::uint64_t next() noexcept;
  /// Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t uniform(std::uint64_t bound) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// First 8 bytes (big-endian) of sha256(decimal(global_seed) ":" query_id).
std::uint64_t query_seed(std::uint64_t global_seed, const std::string& query_id);

/// doc_id at rank 1. Throws ValidationError on an empty ranking.
std::string select_positive(std::span<const ScoredDoc> ranked);

struct NegativeDraw {
  std::vector<std::string> doc_ids;  // in draw order
  bool underfilled = false;          // fewer than m were available
  bool skip() const noexcept { return doc_ids.empty(); }
};

/// Draws min(m, |pool|) ids from the docs with rank > n_shift, never the
/// positive (rank 1).
NegativeDraw sample_negatives(std::span<const ScoredDoc> ranked, int n_shift, int m, std::uint64_t seed);

struct SkippedQuery {
  std::string query_id;
  std::string reason;
};

struct GroupBuildResult {
  std::vector<TrainingGroup> groups;      // dataset order
  std::vector<SkippedQuery> skipped;
  std::vector<std::string> underfilled;  // query ids with fewer than m negatives
};

/// One group per query that has a ranking and a non-empty negative pool.
GroupBuildResult build_training_groups(const std::vector<QueryRecord>& dataset,
                                       const std::map<std::string, std::vector<ScoredDoc>>& rankings,
                                       const PipelineConfig& config);

/// Training-group record {"query_id","question","pos":{"doc_id","text"},
/// "negs":[{"doc_id","text"}...],"seed"}. `doc_text` resolves ids to text.
Json group_to_json(const TrainingGroup& group, const std::function<std::string(const std::string&)>& doc_text);
TrainingGroup group_from_json(const Json& j);

/// Writes one record per group, input order. Throws Error("nothing to export")
/// for an empty sequence.
void export_groups(const std::vector<TrainingGroup>& groups,
                   const std::function<std::string(const std::string&)>& doc_text,
                   const std::filesystem::path& path);
std::vector<TrainingGroup> load_groups(const std::filesystem::path& path);

}  // namespace ralign
