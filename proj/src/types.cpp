#include "ralign/types.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

#include "ralign/error.hpp"

namespace ralign {
namespace {

bool is_blank(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

const Json& require(const Json& j, const char* key) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const Json& j, const char* key) {
  const Json& v = require(j, key);
  if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::vector<std::string> string_array(const Json& v, const char* key) {
  if (!v.is_array()) throw ValidationError(std::string("field '") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ValidationError(std::string("field '") + key + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

bool valid_choice_label(std::string_view label) {
  return label == "A" || label == "B" || label == "C" || label == "D";
}

}  // namespace

std::string_view to_string(TaskKind task) noexcept {
  return task == TaskKind::kOpenQa ? "open_qa" : "multi_choice";
}

std::optional<TaskKind> parse_task_kind(std::string_view s) noexcept {
  if (s == "open_qa") return TaskKind::kOpenQa;
  if (s == "multi_choice") return TaskKind::kMultiChoice;
  return std::nullopt;
}

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("embedding has zero dimensions");
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("embedding contains a non-finite value");
  }
}

double EmbeddingVector::norm() const noexcept {
  double acc = 0.0;
  for (double v : values_) acc += v * v;
  return std::sqrt(acc);
}

EmbeddingVector EmbeddingVector::normalized() const {
  const double n = norm();
  if (!(n > 0.0)) throw ValidationError("cannot normalize a zero embedding");
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values_[i] / n;
  return EmbeddingVector(std::move(out));
}

std::vector<std::string> ValidationReport::messages() const {
  std::vector<std::string> out;
  out.reserve(issues.size());
  for (const auto& issue : issues) {
    std::string msg;
    if (issue.line > 0) msg += "line " + std::to_string(issue.line) + ": ";
    if (!issue.record_id.empty()) msg += "[" + issue.record_id + "] ";
    msg += issue.message;
    out.push_back(std::move(msg));
  }
  return out;
}

Json ValidationReport::to_json() const {
  Json errors = Json::array();
  for (const auto& issue : issues) {
    errors.push_back({{"id", issue.record_id}, {"line", issue.line}, {"message", issue.message}});
  }
  return {{"ok", ok()}, {"errors", errors}};
}

ValidationReport validate_dataset(std::span<const QueryRecord> records) {
  ValidationReport report;
  std::unordered_map<std::string, std::size_t> seen;
  auto add = [&](const std::string& id, std::size_t index, std::string message) {
    report.issues.push_back({id, index + 1, std::move(message)});
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.id.empty()) add(r.id, i, "empty id");
    if (auto [it, inserted] = seen.emplace(r.id, i); !inserted && !r.id.empty()) {
      add(r.id, i, "duplicate id \"" + r.id + "\" (first seen on line " + std::to_string(it->second + 1) + ")");
    }
    if (is_blank(r.question)) add(r.id, i, "empty question");
    if (r.answers.empty()) {
      add(r.id, i, "empty answers");
    } else {
      for (const auto& a : r.answers) {
        if (is_blank(a)) {
          add(r.id, i, "blank answer");
          break;
        }
      }
    }
    if (r.task == TaskKind::kMultiChoice) {
      if (r.choices.empty()) {
        add(r.id, i, "multi_choice without choices");
        continue;
      }
      if (r.choices.size() < 2) add(r.id, i, "malformed choices: fewer than 2 choices");
      std::set<std::string> labels;
      for (const auto& c : r.choices) {
        if (!valid_choice_label(c.label)) {
          add(r.id, i, "malformed choices: label \"" + c.label + "\" not in A-D");
        } else if (!labels.insert(c.label).second) {
          add(r.id, i, "malformed choices: duplicate label \"" + c.label + "\"");
        }
      }
      if (!r.answers.empty() && !labels.contains(r.answers.front())) {
        add(r.id, i, "malformed choices: answer \"" + r.answers.front() + "\" is not a choice label");
      }
    } else if (!r.choices.empty()) {
      add(r.id, i, "choices given for an open_qa record");
    }
  }
  return report;
}

ValidationReport validate_corpus(std::span<const Document> docs) {
  ValidationReport report;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& d = docs[i];
    if (d.id.empty()) report.issues.push_back({d.id, i + 1, "empty id"});
    if (auto [it, inserted] = seen.emplace(d.id, i); !inserted && !d.id.empty()) {
      report.issues.push_back({d.id, i + 1, "duplicate id \"" + d.id + "\""});
    }
    if (is_blank(d.text)) report.issues.push_back({d.id, i + 1, "empty text"});
  }
  return report;
}

void to_json(Json& j, const QueryRecord& r) {
  j = Json{{"id", r.id}, {"question", r.question}, {"answers", r.answers}, {"task", to_string(r.task)}};
  if (!r.choices.empty()) {
    Json choices = Json::array();
    for (const auto& c : r.choices) choices.push_back({{"label", c.label}, {"text", c.text}});
    j["choices"] = std::move(choices);
  }
  if (r.category) j["category"] = *r.category;
  if (!r.support_doc_ids.empty()) j["support_doc_ids"] = r.support_doc_ids;
}

void from_json(const Json& j, QueryRecord& r) {
  QueryRecord out;
  out.id = require_string(j, "id");
  out.question = require_string(j, "question");
  out.answers = string_array(require(j, "answers"), "answers");
  if (auto task = optional_string(j, "task")) {
    auto kind = parse_task_kind(*task);
    if (!kind) throw ValidationError("unknown task \"" + *task + "\"");
    out.task = *kind;
  }
  if (auto it = j.find("choices"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("field 'choices' must be an array");
    for (const auto& c : *it) {
      out.choices.push_back({require_string(c, "label"), require_string(c, "text")});
    }
  }
  out.category = optional_string(j, "category");
  if (auto it = j.find("support_doc_ids"); it != j.end() && !it->is_null()) {
    out.support_doc_ids = string_array(*it, "support_doc_ids");
  }
  r = std::move(out);
}

void to_json(Json& j, const Document& d) {
  j = Json{{"id", d.id}, {"text", d.text}};
  if (d.title) j["title"] = *d.title;
}

void from_json(const Json& j, Document& d) {
  Document out;
  out.id = require_string(j, "id");
  out.title = optional_string(j, "title");
  out.text = require_string(j, "text");
  d = std::move(out);
}

void to_json(Json& j, const Rationale& r) {
  j = Json{{"query_id", r.query_id},
           {"model_id", r.model_id},
           {"prompt_hash", r.prompt_hash},
           {"rationale", r.text}};
}

void from_json(const Json& j, Rationale& r) {
  Rationale out;
  out.query_id = require_string(j, "query_id");
  out.model_id = require_string(j, "model_id");
  out.prompt_hash = require_string(j, "prompt_hash");
  out.text = require_string(j, "rationale");
  r = std::move(out);
}

void to_json(Json& j, const ScoredDoc& d) {
  j = Json{{"doc_id", d.doc_id}, {"retrieval_score", d.retrieval_score}, {"rank", d.rank}};
  j["rationale_score"] = d.rationale_score ? Json(*d.rationale_score) : Json(nullptr);
  j["fused"] = d.fused ? Json(*d.fused) : Json(nullptr);
}

}  // namespace ralign
