#pragma once

// Shared domain vocabulary: dataset and corpus records, embeddings, rationales,
// scored rankings and training groups, plus their on-disk JSON forms.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ralign {

using Json = nlohmann::json;

enum class TaskKind { kOpenQa, kMultiChoice };

std::string_view to_string(TaskKind task) noexcept;
std::optional<TaskKind> parse_task_kind(std::string_view s) noexcept;

struct Choice {
  std::string label;  // "A".."D"
  std::string text;
  bool operator==(const Choice&) const = default;
};

struct QueryRecord {
  std::string id;
  std::string question;
  std::vector<std::string> answers;  // gold answers; for multi-choice, answers[0] is the label
  TaskKind task = TaskKind::kOpenQa;
  std::vector<Choice> choices;
  // Optional grouping for per-category reporting (e.g. "STEM").
  std::optional<std::string> category;
  // Optional ids of documents known to support the answer; enables recall reporting.
  std::vector<std::string> support_doc_ids;

  bool operator==(const QueryRecord&) const = default;
};

struct Document {
  std::string id;
  std::optional<std::string> title;
  std::string text;

  bool operator==(const Document&) const = default;
};

/// Fixed-length vector of finite doubles.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws ValidationError if empty or any value is non-finite.
  explicit EmbeddingVector(std::vector<double> values);

  /// Copy scaled to unit L2 norm. Throws ValidationError for the zero vector.
  EmbeddingVector normalized() const;

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double norm() const noexcept;
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

struct Rationale {
  std::string query_id;
  std::string text;
  std::string model_id;
  std::string prompt_hash;  // sha256 hex of the rendered prompt

  bool operator==(const Rationale&) const = default;
};

struct ScoredDoc {
  std::string doc_id;
  double retrieval_score = 0.0;
  std::optional<double> rationale_score;
  std::optional<double> norm_retrieval;
  std::optional<double> norm_rationale;
  std::optional<double> fused;
  int rank = 0;  // 1-based

  bool operator==(const ScoredDoc&) const = default;
};

struct TrainingGroup {
  std::string query_id;
  std::string question;
  std::string pos_doc_id;
  std::vector<std::string> neg_doc_ids;
  std::uint64_t seed = 0;

  bool operator==(const TrainingGroup&) const = default;
};

struct ValidationIssue {
  std::string record_id;
  std::size_t line = 0;  // 1-based; 0 when unknown
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const noexcept { return issues.empty(); }
  std::vector<std::string> messages() const;
  Json to_json() const;
};

/// Per-record checks: duplicate ids, empty question or answers, malformed choices.
ValidationReport validate_dataset(std::span<const QueryRecord> records);
/// Duplicate ids and blank texts.
ValidationReport validate_corpus(std::span<const Document> docs);

// JSON forms. from_json throws ValidationError on schema violations.
void to_json(Json& j, const QueryRecord& r);
void from_json(const Json& j, QueryRecord& r);
void to_json(Json& j, const Document& d);
void from_json(const Json& j, Document& d);
void to_json(Json& j, const Rationale& r);
void from_json(const Json& j, Rationale& r);
void to_json(Json& j, const ScoredDoc& d);

}  // namespace ralign
