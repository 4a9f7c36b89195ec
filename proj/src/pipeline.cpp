#include "ralign/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/fusion.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/rationale.hpp"
#include "ralign/report.hpp"
#include "ralign/retrieval.hpp"
#include "ralign/sampling.hpp"
#include "ralign/training.hpp"

namespace ralign {
namespace fs = std::filesystem;

namespace {

constexpr Stage kAllStages[] = {Stage::kIngest, Stage::kEmbed, Stage::kRationale, Stage::kRank,
                                Stage::kPairs,  Stage::kTrain, Stage::kEvaluate};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string file_digest_or_empty(const fs::path& p) { return fs::exists(p) ? file_sha256_hex(p) : std::string(); }

HttpOptions http_options(const PipelineConfig& c, const std::string& url, const std::string& key_env) {
  HttpOptions o;
  o.url = url;
  o.api_key = api_key_from_env(key_env);
  o.retry.max_attempts = c.max_attempts;
  o.retry.base_delay = std::chrono::milliseconds(c.retry_base_ms);
  o.requests_per_second = c.requests_per_second;
  return o;
}

void write_vectors(const fs::path& path, const std::vector<std::string>& ids, const std::vector<EmbeddingVector>& vecs) {
  std::vector<Json> lines;
  lines.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    lines.push_back({{"id", ids[i]}, {"values", std::vector<double>(vecs[i].values().begin(), vecs[i].values().end())}});
  }
  write_jsonl(path, lines);
}

EmbeddingMap read_vectors(const fs::path& path) {
  EmbeddingMap out;
  for_each_jsonl(path, [&](JsonLine&& jl) {
    try {
      out.insert_or_assign(jl.value.at("id").get<std::string>(),
                           EmbeddingVector(jl.value.at("values").get<std::vector<double>>()));
    } catch (const Json::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(jl.line) + ": " + e.what());
    }
  });
  return out;
}

std::vector<EmbeddingVector> embed_all(Embedder& embedder, const std::vector<std::string>& texts, int batch) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  const auto step = static_cast<std::size_t>(std::max(batch, 1));
  for (std::size_t start = 0; start < texts.size(); start += step) {
    const auto end = std::min(texts.size(), start + step);
    auto part = embedder.embed(std::vector<std::string>(texts.begin() + static_cast<long>(start),
                                                        texts.begin() + static_cast<long>(end)));
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

bool uses_head(const PipelineConfig& c) { return c.eval_reranker != "base"; }

}  // namespace

const char* stage_name(Stage stage) noexcept {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kEmbed: return "embed";
    case Stage::kRationale: return "rationale";
    case Stage::kRank: return "rank";
    case Stage::kPairs: return "pairs";
    case Stage::kTrain: return "train";
    case Stage::kEvaluate: return "evaluate";
  }
  return "unknown";
}

std::optional<Stage> parse_stage(std::string_view name) noexcept {
  for (Stage s : kAllStages) {
    if (name == stage_name(s)) return s;
  }
  return std::nullopt;
}

std::vector<std::string> stage_outputs(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return {"dataset.jsonl", "corpus.jsonl", "ingest_report.json"};
    case Stage::kEmbed: return {"index.jsonl", "queries.jsonl"};
    case Stage::kRationale: return {"rationales.jsonl", "rationale_report.json"};
    case Stage::kRank: return {"rankings.jsonl"};
    case Stage::kPairs: return {"groups.jsonl", "pairs_report.json"};
    case Stage::kTrain: return {"head.json", "train_report.json"};
    case Stage::kEvaluate: return {"audit.jsonl", "summary.json"};
  }
  return {};
}

// ---------------------------------------------------------------------------

struct ProviderSet::Impl {
  std::unique_ptr<Embedder> raw_embedder;
  std::unique_ptr<EmbeddingCache> embed_cache;
  std::unique_ptr<CachedEmbedder> cached_embedder;
  std::unique_ptr<TextGenerator> rationale_llm;
  std::unique_ptr<TextGenerator> raw_generator;
  std::unique_ptr<GenerationCache> generation_cache;
  std::unique_ptr<CachedGenerator> cached_generator;

  Embedder* embedder = nullptr;
  TextGenerator* generator = nullptr;
};

ProviderSet::ProviderSet(const PipelineConfig& config) : impl_(std::make_unique<Impl>()) {
  // Mocks are cheap and deterministic; only HTTP providers go through the disk caches.
  const fs::path cache_dir = config.cache_dir;
  auto cache_file = [&](const char* name) { return cache_dir.empty() ? fs::path() : cache_dir / name; };

  if (config.embed_provider == "http") {
    impl_->raw_embedder = std::make_unique<HttpEmbeddingClient>(
        http_options(config, config.embed_endpoint, config.embed_api_key_env), config.embed_model);
    if (!cache_dir.empty()) fs::create_directories(cache_dir);
    impl_->embed_cache = std::make_unique<EmbeddingCache>(cache_file("embeddings.jsonl"));
    impl_->cached_embedder = std::make_unique<CachedEmbedder>(*impl_->raw_embedder, *impl_->embed_cache);
    impl_->embedder = impl_->cached_embedder.get();
  } else {
    impl_->raw_embedder = std::make_unique<MockEmbedder>(config.embed_model, static_cast<std::size_t>(config.embed_dim));
    impl_->embedder = impl_->raw_embedder.get();
  }

  if (config.llm_provider == "http") {
    impl_->rationale_llm =
        std::make_unique<HttpChatClient>(http_options(config, config.llm_endpoint, config.llm_api_key_env));
    impl_->raw_generator =
        std::make_unique<HttpChatClient>(http_options(config, config.llm_endpoint, config.llm_api_key_env));
    if (!cache_dir.empty()) fs::create_directories(cache_dir);
    impl_->generation_cache = std::make_unique<GenerationCache>(cache_file("generations.jsonl"));
    impl_->cached_generator = std::make_unique<CachedGenerator>(*impl_->raw_generator, *impl_->generation_cache);
    impl_->generator = impl_->cached_generator.get();
  } else {
    auto canned = std::make_unique<MockGenerator>();
    if (!config.mock_canned_path.empty()) canned->load_canned(config.mock_canned_path);
    if (config.mock_generator == "marker") {
      impl_->raw_generator = std::make_unique<MockGenerator>(
          [marker = config.mock_marker](const LlmRequest& r) { return marker_answer(r, marker); });
    } else {
      auto gen = std::make_unique<MockGenerator>();
      if (!config.mock_canned_path.empty()) gen->load_canned(config.mock_canned_path);
      impl_->raw_generator = std::move(gen);
    }
    impl_->rationale_llm = std::move(canned);
    impl_->generator = impl_->raw_generator.get();
  }
}

ProviderSet::~ProviderSet() = default;
Embedder& ProviderSet::embedder() { return *impl_->embedder; }
TextGenerator& ProviderSet::rationale_llm() { return *impl_->rationale_llm; }
TextGenerator& ProviderSet::generator() { return *impl_->generator; }

// ---------------------------------------------------------------------------

Json Manifest::to_json() const {
  Json stages_json = Json::object();
  for (const auto& [name, r] : stages) {
    stages_json[name] = {{"input_digest", r.input_digest},
                         {"output_digest", r.output_digest},
                         {"completed_at", r.completed_at}};
  }
  return Json{{"config_digest", config_digest}, {"stages", std::move(stages_json)}};
}

Manifest Manifest::from_json(const Json& j) {
  try {
    Manifest m;
    m.config_digest = j.at("config_digest").get<std::string>();
    for (const auto& [name, r] : j.at("stages").items()) {
      m.stages[name] = {r.at("input_digest").get<std::string>(), r.at("output_digest").get<std::string>(),
                        r.value("completed_at", std::string())};
    }
    return m;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
}

fs::path run_dir_for(const PipelineConfig& config) { return fs::path(config.runs_root) / config.digest().substr(0, 16); }

Run::Run(PipelineConfig config, ProviderSet& providers, Logger log)
    : config_(validate_config(config)), providers_(providers), log_(std::move(log)), dir_(run_dir_for(config_)) {
  fs::create_directories(dir_);
  lock_path_ = dir_ / ".lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw Error("run directory " + dir_.string() + " is locked by another process (remove " +
                  lock_path_.string() + " if stale)");
    }
    throw Error("cannot create lock " + lock_path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);

  try {
    manifest_.config_digest = config_.digest();
    const auto manifest_path = dir_ / "manifest.json";
    if (fs::exists(manifest_path)) {
      Json j = Json::parse(read_text_file(manifest_path), nullptr, false);
      if (!j.is_discarded()) {
        auto loaded = Manifest::from_json(j);
        if (loaded.config_digest == manifest_.config_digest) manifest_ = std::move(loaded);
      }
    }
    write_text_file(dir_ / "config.json", dump_json(config_.to_json()) + "\n");
  } catch (...) {
    std::error_code ec;
    fs::remove(lock_path_, ec);
    throw;
  }
}

Run::~Run() {
  std::error_code ec;
  fs::remove(lock_path_, ec);
}

std::string Run::input_digest(Stage stage) const {
  auto f = [&](const char* name) { return std::string(name) + "=" + file_digest_or_empty(dir_ / name) + "\n"; };
  std::string material = std::string(stage_name(stage)) + "\n" + manifest_.config_digest + "\n";
  switch (stage) {
    case Stage::kIngest:
      if (config_.dataset_path.empty()) throw ValidationError("config: dataset_path is not set");
      if (config_.corpus_path.empty()) throw ValidationError("config: corpus_path is not set");
      for (const auto& p : {config_.dataset_path, config_.corpus_path}) {
        if (!fs::exists(p)) throw ValidationError(p + ": no such file");
        material += file_sha256_hex(p) + "\n";
      }
      break;
    case Stage::kEmbed: material += f("dataset.jsonl") + f("corpus.jsonl"); break;
    case Stage::kRationale:
      material += f("dataset.jsonl");
      if (config_.llm_provider != "http" && !config_.mock_canned_path.empty()) {
        material += "canned=" + file_digest_or_empty(config_.mock_canned_path) + "\n";
      }
      break;
    case Stage::kRank: material += f("index.jsonl") + f("queries.jsonl") + f("rationales.jsonl"); break;
    case Stage::kPairs: material += f("dataset.jsonl") + f("corpus.jsonl") + f("rankings.jsonl"); break;
    case Stage::kTrain: material += f("groups.jsonl") + f("index.jsonl") + f("queries.jsonl"); break;
    case Stage::kEvaluate:
      material += f("dataset.jsonl") + f("corpus.jsonl") + f("index.jsonl");
      material += uses_head(config_) ? f("head.json") : std::string("base\n");
      break;
  }
  return sha256_hex(material);
}

std::string Run::output_digest(Stage stage) const {
  std::string material;
  for (const auto& name : stage_outputs(stage)) {
    const auto d = file_digest_or_empty(dir_ / name);
    if (d.empty()) return {};
    material += name + "=" + d + "\n";
  }
  return sha256_hex(material);
}

bool Run::is_current(Stage stage, const std::string& input) const {
  auto it = manifest_.stages.find(stage_name(stage));
  if (it == manifest_.stages.end() || it->second.input_digest != input) return false;
  const auto out = output_digest(stage);
  return !out.empty() && out == it->second.output_digest;
}

void Run::record(Stage stage, const std::string& input) {
  manifest_.stages[stage_name(stage)] = {input, output_digest(stage), utc_now()};
  write_text_file(dir_ / "manifest.json", dump_json(manifest_.to_json()) + "\n");
}

std::vector<StageStatus> Run::run_until(Stage last) {
  failed_.reset();
  std::vector<Stage> plan;
  for (Stage s : kAllStages) {
    if (static_cast<int>(s) > static_cast<int>(last)) break;
    plan.push_back(s);
  }
  // The base reranker needs no alignment artifacts.
  if (last == Stage::kEvaluate && !uses_head(config_)) {
    std::erase_if(plan, [](Stage s) {
      return s == Stage::kRationale || s == Stage::kRank || s == Stage::kPairs || s == Stage::kTrain;
    });
  }

  std::vector<StageStatus> statuses;
  for (Stage s : plan) {
    try {
      const auto input = input_digest(s);
      if (is_current(s, input)) {
        if (log_) log_(std::string("stage ") + stage_name(s) + ": up to date, skipped");
        statuses.push_back({s, true});
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      execute(s);
      record(s, input);
      if (log_) {
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
        std::ostringstream msg;
        msg << "stage " << stage_name(s) << ": done in " << std::fixed << std::setprecision(2) << took.count() << " s";
        log_(msg.str());
      }
      statuses.push_back({s, false});
    } catch (...) {
      failed_ = s;
      if (log_) log_(std::string("stage ") + stage_name(s) + ": failed");
      throw;
    }
  }
  return statuses;
}

void Run::execute(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return do_ingest();
    case Stage::kEmbed: return do_embed();
    case Stage::kRationale: return do_rationale();
    case Stage::kRank: return do_rank();
    case Stage::kPairs: return do_pairs();
    case Stage::kTrain: return do_train();
    case Stage::kEvaluate: return do_evaluate();
  }
}

void Run::do_ingest() {
  const auto dataset = load_dataset(config_.dataset_path);
  const auto corpus = load_corpus(config_.corpus_path);
  const auto dataset_report = validate_dataset(dataset);
  const auto corpus_report = validate_corpus(corpus);
  Json report{{"dataset", dataset_report.to_json()},
              {"corpus", corpus_report.to_json()},
              {"records", dataset.size()},
              {"documents", corpus.size()}};
  write_text_file(dir_ / "ingest_report.json", dump_json(report) + "\n");

  std::vector<std::string> problems;
  for (const auto& m : dataset_report.messages()) problems.push_back(config_.dataset_path + ": " + m);
  for (const auto& m : corpus_report.messages()) problems.push_back(config_.corpus_path + ": " + m);
  if (corpus.empty()) problems.push_back(config_.corpus_path + ": empty corpus");
  if (dataset.empty()) problems.push_back(config_.dataset_path + ": empty dataset");
  if (!problems.empty()) throw ValidationError(std::move(problems));

  save_dataset(dir_ / "dataset.jsonl", dataset);
  save_corpus(dir_ / "corpus.jsonl", corpus);
}

void Run::do_embed() {
  const auto corpus = load_corpus(dir_ / "corpus.jsonl");
  const auto dataset = load_dataset(dir_ / "dataset.jsonl");
  auto& embedder = providers_.embedder();
  const auto index = index_corpus(corpus, embedder, static_cast<std::size_t>(config_.embed_batch));
  index.save(dir_ / "index.jsonl");

  std::vector<std::string> ids, questions;
  for (const auto& r : dataset) {
    ids.push_back(r.id);
    questions.push_back(r.question);
  }
  auto vecs = embed_all(embedder, questions, config_.embed_batch);
  for (const auto& v : vecs) {
    if (v.dim() != index.dim()) {
      throw ProviderError(ProviderErrorKind::kDimensionMismatch, "query embedding dim " + std::to_string(v.dim()) +
                                                                     " != corpus dim " + std::to_string(index.dim()));
    }
  }
  write_vectors(dir_ / "queries.jsonl", ids, vecs);
}

void Run::do_rationale() {
  const auto dataset = load_dataset(dir_ / "dataset.jsonl");
  RationaleOptions options;
  options.model_id = config_.rationale_model;
  options.max_tokens = config_.max_tokens;
  options.temperature = config_.temperature;
  options.join_answers = config_.join_answers;
  options.concurrency = config_.concurrency;
  const fs::path store_path =
      config_.llm_provider == "http" && !config_.cache_dir.empty() ? fs::path(config_.cache_dir) / "rationales.jsonl"
                                                                   : fs::path();
  if (!store_path.empty()) fs::create_directories(store_path.parent_path());
  RationaleStore store(store_path);
  const auto report = extract_all(providers_.rationale_llm(), dataset, options, store);

  std::vector<Json> lines;
  for (const auto& r : report.rationales) lines.push_back(Json(r));
  write_jsonl(dir_ / "rationales.jsonl", lines);
  Json failures = Json::array();
  for (const auto& f : report.failures) failures.push_back({{"query_id", f.query_id}, {"message", f.message}});
  write_text_file(dir_ / "rationale_report.json",
                  dump_json({{"extracted", report.rationales.size()}, {"failed", std::move(failures)}}) + "\n");
  if (log_ && !report.failures.empty()) {
    log_("rationale: " + std::to_string(report.failures.size()) + " of " + std::to_string(dataset.size()) +
         " queries failed (see rationale_report.json)");
  }
}

void Run::do_rank() {
  const auto index = CorpusIndex::load(dir_ / "index.jsonl");
  const auto queries = read_vectors(dir_ / "queries.jsonl");
  std::vector<Rationale> rationales;
  for_each_jsonl(dir_ / "rationales.jsonl", [&](JsonLine&& jl) { rationales.push_back(jl.value.get<Rationale>()); });

  std::vector<std::string> texts;
  for (const auto& r : rationales) texts.push_back(r.text);
  const auto rationale_vecs = embed_all(providers_.embedder(), texts, config_.embed_batch);

  std::vector<Json> lines;
  for (std::size_t i = 0; i < rationales.size(); ++i) {
    const auto& qid = rationales[i].query_id;
    auto it = queries.find(qid);
    if (it == queries.end()) throw ValidationError("rank: no query embedding for " + qid);
    const auto retrieved = retrieve(index, qid, it->second, config_.k1);
    const auto ranked = rank_by_fusion(retrieved, rationale_vecs[i], index, config_.alpha);
    lines.push_back(ranking_to_json(qid, config_.alpha, ranked));
  }
  write_jsonl(dir_ / "rankings.jsonl", lines);
}

void Run::do_pairs() {
  const auto dataset = load_dataset(dir_ / "dataset.jsonl");
  const auto corpus = load_corpus(dir_ / "corpus.jsonl");
  std::map<std::string, std::vector<ScoredDoc>> rankings;
  for_each_jsonl(dir_ / "rankings.jsonl", [&](JsonLine&& jl) {
    std::string qid;
    auto ranked = ranking_from_json(jl.value, &qid);
    rankings[qid] = std::move(ranked);
  });
  const auto built = build_training_groups(dataset, rankings, config_);

  Json skipped = Json::array();
  for (const auto& s : built.skipped) skipped.push_back({{"query_id", s.query_id}, {"reason", s.reason}});
  write_text_file(dir_ / "pairs_report.json", dump_json({{"groups", built.groups.size()},
                                                          {"skipped", std::move(skipped)},
                                                          {"underfilled", built.underfilled}}) +
                                                  "\n");
  if (built.groups.empty()) throw ValidationError("pairs: no query produced a training group");

  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : corpus) by_id.emplace(d.id, &d);
  export_groups(built.groups, [&](const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("pairs: document " + id + " missing from corpus");
    return it->second->text;
  }, dir_ / "groups.jsonl");
}

void Run::do_train() {
  const auto groups = load_groups(dir_ / "groups.jsonl");
  const auto index = CorpusIndex::load(dir_ / "index.jsonl");
  const auto queries = read_vectors(dir_ / "queries.jsonl");
  EmbeddingMap docs;
  auto add_doc = [&](const std::string& id) {
    const auto row = index.row(id);
    if (row.empty()) throw ValidationError("train: document " + id + " missing from index");
    docs.try_emplace(id, std::vector<double>(row.begin(), row.end()));
  };
  for (const auto& g : groups) {
    add_doc(g.pos_doc_id);
    for (const auto& id : g.neg_doc_ids) add_doc(id);
  }
  auto result = train(groups, queries, docs, config_);
  result.head.save(dir_ / "head.json", manifest_.config_digest);
  write_text_file(dir_ / "train_report.json", dump_json(result.report.to_json()) + "\n");
}

void Run::do_evaluate() {
  const auto dataset = load_dataset(dir_ / "dataset.jsonl");
  const auto corpus = load_corpus(dir_ / "corpus.jsonl");
  const auto index = CorpusIndex::load(dir_ / "index.jsonl");
  std::optional<RerankerHead> head;
  if (uses_head(config_)) head = RerankerHead::load(dir_ / "head.json");
  EvalInputs inputs{dataset, corpus, index, head ? &*head : nullptr};
  const auto result = evaluate_pipeline(inputs, providers_.embedder(), providers_.generator(), config_);

  std::vector<Json> audit;
  for (const auto& q : result.queries) audit.push_back(q.to_json());
  write_jsonl(dir_ / "audit.jsonl", audit);
  write_text_file(dir_ / "summary.json", dump_json(result.summary.to_json()) + "\n");
}

EvalSummary Run::summary() const { return load_report_row(dir_).summary; }

SweepResult run_sweep(const PipelineConfig& config, const std::vector<double>& alphas, ProviderSet& providers,
                      Run::Logger log) {
  if (alphas.empty()) throw ValidationError("sweep: no alpha values");
  SweepResult result;
  std::vector<ReportRow> rows;

  PipelineConfig base = config;
  base.eval_reranker = "base";
  {
    if (log) log("sweep: base reranker");
    Run run(base, providers, log);
    run.run_all();
    result.base_run = run.dir();
  }
  rows.push_back(load_report_row(result.base_run));

  for (double alpha : alphas) {
    PipelineConfig c = config;
    c.alpha = alpha;
    c.eval_reranker = "trained";
    if (log) {
      std::ostringstream msg;
      msg << "sweep: alpha=" << alpha;
      log(msg.str());
    }
    Run run(c, providers, log);
    run.run_all();
    result.runs.emplace_back(alpha, run.dir());
    rows.push_back(load_report_row(run.dir()));
  }
  result.table = render_report(rows, 0);
  write_text_file(fs::path(config.runs_root) / "sweep_report.txt", result.table);
  return result;
}

}  // namespace ralign
