#include "ralign/rationale.hpp"

#include <cctype>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/parallel.hpp"

namespace ralign {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

std::string store_key(const std::string& query_id, const std::string& model_id, const std::string& prompt_hash) {
  // Length-prefixed so no two triples share an encoding.
  return sha256_hex(std::to_string(query_id.size()) + ":" + query_id + std::to_string(model_id.size()) + ":" +
                    model_id + prompt_hash);
}

}  // namespace

std::string build_rationale_prompt(const std::string& question, const std::string& answer) {
  if (question.empty()) throw ValidationError("rationale prompt: empty question");
  if (answer.empty()) throw ValidationError("rationale prompt: empty answer");
  std::string out =
      "You are a professional QA assistant. Given a question and the ground truth answer, you can output the "
      "rationale why the ground truth answer is correct. Question: ";
  out += question;
  out += ". Answer: ";
  out += answer;
  out += ". Rationale: ";
  return out;
}

std::string prompt_answer(const QueryRecord& record, bool join_answers) {
  if (record.answers.empty()) throw ValidationError("record " + record.id + " has no answers");
  if (!join_answers) return record.answers.front();
  std::string out;
  for (const auto& a : record.answers) {
    if (!out.empty()) out += "; ";
    out += a;
  }
  return out;
}

RationaleStore::RationaleStore(std::filesystem::path path) : store_(std::move(path)) {}

std::optional<Rationale> RationaleStore::find(const std::string& query_id, const std::string& model_id,
                                              const std::string& prompt_hash) const {
  auto rec = store_.get(store_key(query_id, model_id, prompt_hash));
  if (!rec) return std::nullopt;
  try {
    return rec->get<Rationale>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void RationaleStore::put(const Rationale& rationale) {
  store_.put(store_key(rationale.query_id, rationale.model_id, rationale.prompt_hash), Json(rationale));
}

Rationale extract_rationale(TextGenerator& llm, const QueryRecord& record, const RationaleOptions& options,
                            RationaleStore& store) {
  const std::string prompt = build_rationale_prompt(record.question, prompt_answer(record, options.join_answers));
  const std::string hash = sha256_hex(prompt);
  if (auto cached = store.find(record.id, options.model_id, hash)) return *cached;

  LlmRequest request;
  request.model_id = options.model_id;
  request.user = prompt;
  request.max_tokens = options.max_tokens;
  request.temperature = options.temperature;
  std::string text;
  try {
    text = trim(llm.generate(request));
  } catch (const ProviderError& e) {
    throw ProviderError(e.kind(), "query " + record.id + ": " + e.what(), e.attempts());
  }
  if (text.empty()) throw Error("query " + record.id + ": blank rationale");
  Rationale r{record.id, std::move(text), options.model_id, hash};
  store.put(r);
  return r;
}

ExtractReport extract_all(TextGenerator& llm, const std::vector<QueryRecord>& dataset,
                          const RationaleOptions& options, RationaleStore& store) {
  std::vector<std::optional<Rationale>> results(dataset.size());
  std::vector<std::optional<std::string>> errors(dataset.size());
  std::vector<std::exception_ptr> raised(dataset.size());
  parallel_for(dataset.size(), options.concurrency, [&](std::size_t i) {
    try {
      results[i] = extract_rationale(llm, dataset[i], options, store);
    } catch (const std::exception& e) {
      errors[i] = e.what();
      raised[i] = std::current_exception();
    }
  });
  ExtractReport report;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (results[i]) {
      report.rationales.push_back(std::move(*results[i]));
    } else {
      report.failures.push_back({dataset[i].id, errors[i].value_or("unknown error")});
    }
  }
  // Every record failing means a systemic problem; surface the first error as-is.
  if (!dataset.empty() && report.rationales.empty()) std::rethrow_exception(raised.front());
  return report;
}

}  // namespace ralign
