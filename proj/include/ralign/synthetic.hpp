#pragma once

// Generated fixtures for offline runs and tests.
//
// Planted suite: every query has one supportive document that carries the
// answer ("so the answer is <ans>") and shares its clue tokens with the
// query's canned rationale. "Hard" queries also get distractors that overlap
// the query far more than the supportive document does, pushing it below
// rank k2 under plain cosine retrieval.
//
// Separable suite: groups whose positive embedding is collinear with the query
// and whose negatives are orthogonal to it.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ralign/config.hpp"
#include "ralign/training.hpp"
#include "ralign/types.hpp"

namespace ralign {

struct PlantedOptions {
  int queries = 50;
  int documents = 200;
  double hard_fraction = 0.4;
  int distractors = 6;  // per hard query
  std::uint64_t seed = 0;
};

struct CannedCompletion {
  std::string prompt_hash;
  std::string text;
};

struct PlantedSuite {
  std::vector<QueryRecord> dataset;  // support_doc_ids set
  std::vector<Document> corpus;
  std::vector<CannedCompletion> rationales;  // keyed by the rationale prompt hash
  std::vector<std::string> hard_query_ids;
};

/// Throws ValidationError when the document budget cannot hold the planted docs.
PlantedSuite make_planted_suite(const PlantedOptions& options = {});

/// Writes dataset.jsonl, corpus.jsonl and canned.jsonl into `dir` and returns a
/// config wired to them (mock providers, marker generator).
PipelineConfig write_planted_suite(const PlantedSuite& suite, const std::filesystem::path& dir);

struct SeparableSuite {
  std::vector<TrainingGroup> groups;
  EmbeddingMap query_vecs;
  EmbeddingMap doc_vecs;
};

/// `groups` groups in `dim` dimensions (dim >= negatives + 1): query q, positive
/// a positive multiple of q, negatives orthonormal to q.
SeparableSuite make_separable_suite(int groups, std::size_t dim, int negatives, std::uint64_t seed);

}  // namespace ralign
