#pragma once

// RAG inference and scoring: retrieve top-k1, rerank to top-k2 (trained head or
// base cosine), prompt the generator with the kept documents, then score the
// prediction with EM/F1 (open QA) or option match (multi-choice).

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ralign/config.hpp"
#include "ralign/providers.hpp"
#include "ralign/retrieval.hpp"
#include "ralign/training.hpp"
#include "ralign/types.hpp"

namespace ralign {

struct Prompt {
  std::string system;
  std::string user;
};

/// "Doc {i} (Title: {title}) {text}" lines, i from 1; the title part is
/// dropped when a document has none.
std::string render_reference(std::span<const Document> docs);

/// Throws ValidationError for empty docs.
Prompt build_qa_prompt(const std::string& question, std::span<const Document> docs);
/// Choices are appended to the question as "A. text" lines. Throws
/// ValidationError for empty docs or a malformed choice set.
Prompt build_mc_prompt(const std::string& question, std::span<const Choice> choices, std::span<const Document> docs);

/// Lowercase, strip ASCII punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

/// 1 if the normalized prediction equals some normalized gold, else 0.
int exact_match(std::string_view prediction, std::span<const std::string> golds);
/// Best bag-of-tokens F1 against any gold.
double token_f1(std::string_view prediction, std::span<const std::string> golds);

/// First whitespace-delimited A/B/C/D token (any case, optionally followed by
/// '.' or ')'), uppercased.
std::optional<std::string> extract_mc_option(std::string_view prediction);

struct QueryOutcome {
  std::string query_id;
  std::vector<std::string> retrieved;
  std::vector<std::string> reranked;
  std::string prediction;
  int em = 0;
  double f1 = 0.0;
  bool failed = false;
  std::string error;
  std::optional<std::string> category;
  std::optional<bool> support_hit;  // set when the record lists support_doc_ids

  /// Audit record {"query_id","retrieved","reranked","prediction","em","f1"}
  /// plus "failed"/"error" on failure and "support_hit" when known.
  Json to_json() const;
};

struct CategoryScore {
  long n = 0;
  double em = 0.0;
};

struct EvalSummary {
  long n = 0;  // scored queries (failed ones excluded)
  double em = 0.0;
  double f1 = 0.0;
  long failed = 0;
  std::string config_digest;
  std::map<std::string, CategoryScore> per_category;  // multi-choice only, includes "ALL"
  std::optional<double> recall;  // support-doc recall@k2 over records with support ids

  Json to_json() const;
  static EvalSummary from_json(const Json& j);
};

struct EvalResult {
  std::vector<QueryOutcome> queries;  // dataset order
  EvalSummary summary;
};

/// Aggregates per-query outcomes. Sums run over sorted values, so the result
/// does not depend on record order.
EvalSummary summarize(std::span<const QueryOutcome> outcomes, const std::string& config_digest);

struct EvalInputs {
  const std::vector<QueryRecord>& dataset;
  std::span<const Document> corpus;
  const CorpusIndex& index;
  const RerankerHead* head = nullptr;  // nullptr = base cosine reranking
};

/// Runs every query with up to config.concurrency workers. Generator failures
/// mark the query failed; other errors propagate.
EvalResult evaluate_pipeline(const EvalInputs& inputs, Embedder& embedder, TextGenerator& generator,
                             const PipelineConfig& config);

}  // namespace ralign
