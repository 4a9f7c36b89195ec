#pragma once

// Rationale extraction: prompt an LLM with a question and its gold answer and
// keep the explanation it produces, with provenance.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ralign/providers.hpp"
#include "ralign/types.hpp"

namespace ralign {

/// Renders the rationale prompt. Placeholders are substituted once, verbatim.
/// Throws ValidationError on empty question or answer.
std::string build_rationale_prompt(const std::string& question, const std::string& answer);

struct RationaleOptions {
  std::string model_id = "mock-rationale";
  int max_tokens = 256;
  double temperature = 0.0;
  bool join_answers = false;  // prompt with all gold answers joined by "; " instead of the first
  int concurrency = 4;
};

/// The answer text placed in the prompt for `record`.
std::string prompt_answer(const QueryRecord& record, bool join_answers);

/// Append-only rationale store, JSONL records
/// {"query_id","model_id","prompt_hash","rationale"}, keyed by all three
/// identifiers. Empty path = in-memory.
class RationaleStore {
 public:
  explicit RationaleStore(std::filesystem::path path = {});

  std::optional<Rationale> find(const std::string& query_id, const std::string& model_id,
                                const std::string& prompt_hash) const;
  void put(const Rationale& rationale);
  std::size_t size() const { return store_.size(); }

 private:
  JsonlStore store_;
};

/// Extracts (or serves from `store`) the rationale for one record. Blank
/// completions raise Error("blank rationale") and are not stored; provider
/// errors are rethrown with the query id prepended.
Rationale extract_rationale(TextGenerator& llm, const QueryRecord& record, const RationaleOptions& options,
                            RationaleStore& store);

struct ExtractFailure {
  std::string query_id;
  std::string message;
};

struct ExtractReport {
  std::vector<Rationale> rationales;  // successes, in dataset order
  std::vector<ExtractFailure> failures;
};

/// Runs extract_rationale over the dataset with bounded concurrency. Throws
/// only when every record fails.
ExtractReport extract_all(TextGenerator& llm, const std::vector<QueryRecord>& dataset,
                          const RationaleOptions& options, RationaleStore& store);

}  // namespace ralign
