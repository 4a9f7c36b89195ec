#include "ralign/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ralign/error.hpp"
#include "ralign/parallel.hpp"

namespace ralign {
namespace {

constexpr std::string_view kQaSystem =
    "Answer the question based on the given document. Only give me the answer and do not output any other words. "
    "The following are given documents.\n";
constexpr std::string_view kMcSystem =
    "Answer the question based on the given document. Only give me the option (A/B/C/D) and do not output any "
    "other words. The following are given documents.\n";

std::vector<std::string> tokens(std::string_view normalized) {
  std::vector<std::string> out;
  std::istringstream in{std::string(normalized)};
  for (std::string t; in >> t;) out.push_back(std::move(t));
  return out;
}

double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
  std::unordered_map<std::string, long> counts;
  for (const auto& t : gold) ++counts[t];
  long overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

void check_golds(std::span<const std::string> golds, const char* what) {
  if (golds.empty()) throw ValidationError(std::string(what) + ": empty golds");
}

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0);
}

}  // namespace

std::string render_reference(std::span<const Document> docs) {
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Doc " + std::to_string(i + 1) + " ";
    if (docs[i].title) out += "(Title: " + *docs[i].title + ") ";
    out += docs[i].text;
  }
  return out;
}

Prompt build_qa_prompt(const std::string& question, std::span<const Document> docs) {
  if (docs.empty()) throw ValidationError("qa prompt: no documents");
  return Prompt{std::string(kQaSystem) + render_reference(docs), "Question: " + question + "\nAnswer:"};
}

Prompt build_mc_prompt(const std::string& question, std::span<const Choice> choices, std::span<const Document> docs) {
  if (docs.empty()) throw ValidationError("mc prompt: no documents");
  if (choices.size() < 2 || choices.size() > 4) throw ValidationError("mc prompt: malformed choices");
  std::set<std::string> seen;
  std::string rendered = question;
  for (const auto& c : choices) {
    const bool label_ok = c.label.size() == 1 && c.label[0] >= 'A' && c.label[0] <= 'D';
    if (!label_ok || !seen.insert(c.label).second) {
      throw ValidationError("mc prompt: malformed choice label \"" + c.label + "\"");
    }
    rendered += "\n" + c.label + ". " + c.text;
  }
  return Prompt{std::string(kMcSystem) + render_reference(docs), "Question: " + rendered + "\nAnswer:"};
}

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::ispunct(u)) continue;
    cleaned += static_cast<char>(std::tolower(u));
  }
  std::string out;
  for (const auto& t : tokens(cleaned)) {
    if (t == "a" || t == "an" || t == "the") continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

int exact_match(std::string_view prediction, std::span<const std::string> golds) {
  check_golds(golds, "exact_match");
  const auto pred = normalize_answer(prediction);
  for (const auto& g : golds) {
    if (normalize_answer(g) == pred) return 1;
  }
  return 0;
}

double token_f1(std::string_view prediction, std::span<const std::string> golds) {
  check_golds(golds, "token_f1");
  const auto pred = tokens(normalize_answer(prediction));
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, f1_single(pred, tokens(normalize_answer(g))));
  return best;
}

std::optional<std::string> extract_mc_option(std::string_view prediction) {
  std::istringstream in{std::string(prediction)};
  for (std::string t; in >> t;) {
    if (t.size() == 2 && (t[1] == '.' || t[1] == ')')) t.pop_back();
    if (t.size() != 1) continue;
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    if (c >= 'A' && c <= 'D') return std::string(1, c);
  }
  return std::nullopt;
}

Json QueryOutcome::to_json() const {
  Json j{{"query_id", query_id}, {"retrieved", retrieved}, {"reranked", reranked},
         {"prediction", prediction}, {"em", em},             {"f1", f1}};
  if (failed) {
    j["failed"] = true;
    j["error"] = error;
  }
  if (category) j["category"] = *category;
  if (support_hit) j["support_hit"] = *support_hit;
  return j;
}

Json EvalSummary::to_json() const {
  Json j{{"n", n}, {"em", em}, {"f1", f1}, {"failed", failed}, {"config_digest", config_digest}};
  if (!per_category.empty()) {
    Json cats = Json::object();
    for (const auto& [name, s] : per_category) cats[name] = {{"n", s.n}, {"em", s.em}};
    j["per_category"] = std::move(cats);
  }
  if (recall) j["recall"] = *recall;
  return j;
}

EvalSummary EvalSummary::from_json(const Json& j) {
  try {
    EvalSummary s;
    s.n = j.at("n").get<long>();
    s.em = j.at("em").get<double>();
    s.f1 = j.at("f1").get<double>();
    s.failed = j.at("failed").get<long>();
    s.config_digest = j.value("config_digest", std::string());
    if (auto it = j.find("per_category"); it != j.end()) {
      for (const auto& [name, v] : it->items()) s.per_category[name] = {v.at("n").get<long>(), v.at("em").get<double>()};
    }
    if (auto it = j.find("recall"); it != j.end() && !it->is_null()) s.recall = it->get<double>();
    return s;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("summary: ") + e.what());
  }
}

EvalSummary summarize(std::span<const QueryOutcome> outcomes, const std::string& config_digest) {
  EvalSummary s;
  s.config_digest = config_digest;
  std::vector<double> ems, f1s, hits;
  std::map<std::string, std::vector<double>> cat_ems;
  bool multi_choice = false;
  for (const auto& q : outcomes) {
    if (q.support_hit) hits.push_back(*q.support_hit ? 1.0 : 0.0);
    if (q.failed) {
      ++s.failed;
      continue;
    }
    ems.push_back(q.em);
    f1s.push_back(q.f1);
    if (q.category) {
      multi_choice = true;
      cat_ems[*q.category].push_back(q.em);
    }
    cat_ems["ALL"].push_back(q.em);
  }
  s.n = static_cast<long>(ems.size());
  if (s.n > 0) {
    s.em = sorted_sum(ems) / static_cast<double>(s.n);
    s.f1 = sorted_sum(f1s) / static_cast<double>(s.n);
  }
  if (multi_choice) {
    for (auto& [name, v] : cat_ems) {
      const auto n = static_cast<long>(v.size());
      s.per_category[name] = {n, sorted_sum(std::move(v)) / static_cast<double>(n)};
    }
  }
  if (!hits.empty()) s.recall = sorted_sum(hits) / static_cast<double>(hits.size());
  return s;
}

EvalResult evaluate_pipeline(const EvalInputs& inputs, Embedder& embedder, TextGenerator& generator,
                             const PipelineConfig& config) {
  validate_config(config);
  if (inputs.head && inputs.head->dim() != inputs.index.dim()) {
    throw ValidationError("evaluate: head dim " + std::to_string(inputs.head->dim()) + " != index dim " +
                          std::to_string(inputs.index.dim()));
  }
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : inputs.corpus) by_id.emplace(d.id, &d);

  const auto& dataset = inputs.dataset;
  std::vector<std::string> questions;
  questions.reserve(dataset.size());
  for (const auto& r : dataset) questions.push_back(r.question);
  std::vector<EmbeddingVector> query_vecs;
  for (std::size_t start = 0; start < questions.size(); start += static_cast<std::size_t>(config.embed_batch)) {
    const auto end = std::min(questions.size(), start + static_cast<std::size_t>(config.embed_batch));
    auto part = embedder.embed(std::vector<std::string>(questions.begin() + static_cast<long>(start),
                                                        questions.begin() + static_cast<long>(end)));
    for (auto& v : part) query_vecs.push_back(v.normalized());
  }

  EvalResult result;
  result.queries.resize(dataset.size());
  parallel_for(dataset.size(), config.concurrency, [&](std::size_t i) {
    const auto& record = dataset[i];
    auto& out = result.queries[i];
    out.query_id = record.id;
    if (record.task == TaskKind::kMultiChoice) out.category = record.category.value_or("Other");

    const auto retrieved = retrieve(inputs.index, record.id, query_vecs[i], config.k1);
    std::vector<Candidate> candidates;
    for (const auto& d : retrieved.docs) {
      out.retrieved.push_back(d.doc_id);
      candidates.push_back({d.doc_id, inputs.index.row(d.doc_id)});
    }
    out.reranked = inputs.head ? rerank_with_head(*inputs.head, query_vecs[i].values(), candidates, config.k2)
                               : rerank_by_cosine(query_vecs[i].values(), candidates, config.k2);
    if (!record.support_doc_ids.empty()) {
      out.support_hit = std::any_of(out.reranked.begin(), out.reranked.end(), [&](const std::string& id) {
        return std::find(record.support_doc_ids.begin(), record.support_doc_ids.end(), id) !=
               record.support_doc_ids.end();
      });
    }

    std::vector<Document> context;
    for (const auto& id : out.reranked) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("evaluate: document " + id + " missing from corpus");
      context.push_back(*it->second);
    }
    const Prompt prompt = record.task == TaskKind::kMultiChoice
                              ? build_mc_prompt(record.question, record.choices, context)
                              : build_qa_prompt(record.question, context);
    LlmRequest request{config.generator_model, prompt.system, prompt.user, config.generator_max_tokens,
                       config.temperature};
    try {
      out.prediction = generator.generate(request);
    } catch (const ProviderError& e) {
      out.failed = true;
      out.error = e.what();
      return;
    }
    if (record.task == TaskKind::kMultiChoice) {
      const auto option = extract_mc_option(out.prediction);
      out.em = option && *option == record.answers.front() ? 1 : 0;
      out.f1 = out.em;
    } else {
      out.em = exact_match(out.prediction, record.answers);
      out.f1 = token_f1(out.prediction, record.answers);
    }
  });
  result.summary = summarize(result.queries, config.digest());
  return result;
}

}  // namespace ralign
