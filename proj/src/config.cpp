#include "ralign/config.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"

namespace ralign {
namespace {

template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("alpha", c.alpha);
  f("k1", c.k1);
  f("k2", c.k2);
  f("n_shift", c.n_shift);
  f("m_negatives", c.m_negatives);
  f("tau", c.tau);
  f("learning_rate", c.learning_rate);
  f("weight_decay", c.weight_decay);
  f("epochs", c.epochs);
  f("seed", c.seed);
  f("dataset_path", c.dataset_path);
  f("corpus_path", c.corpus_path);
  f("runs_root", c.runs_root);
  f("cache_dir", c.cache_dir);
  f("llm_provider", c.llm_provider);
  f("llm_endpoint", c.llm_endpoint);
  f("llm_api_key_env", c.llm_api_key_env);
  f("rationale_model", c.rationale_model);
  f("generator_model", c.generator_model);
  f("max_tokens", c.max_tokens);
  f("generator_max_tokens", c.generator_max_tokens);
  f("temperature", c.temperature);
  f("join_answers", c.join_answers);
  f("mock_canned_path", c.mock_canned_path);
  f("mock_generator", c.mock_generator);
  f("mock_marker", c.mock_marker);
  f("embed_provider", c.embed_provider);
  f("embed_endpoint", c.embed_endpoint);
  f("embed_api_key_env", c.embed_api_key_env);
  f("embed_model", c.embed_model);
  f("embed_dim", c.embed_dim);
  f("embed_batch", c.embed_batch);
  f("concurrency", c.concurrency);
  f("requests_per_second", c.requests_per_second);
  f("max_attempts", c.max_attempts);
  f("retry_base_ms", c.retry_base_ms);
  f("eval_reranker", c.eval_reranker);
}

// Keys that do not change any artifact and so stay out of the digest.
const std::set<std::string>& non_semantic_keys() {
  static const std::set<std::string> keys{
      "dataset_path", "corpus_path",  "runs_root",   "cache_dir",       "llm_api_key_env",
      "embed_api_key_env", "concurrency", "requests_per_second", "max_attempts", "retry_base_ms"};
  return keys;
}

std::string type_error(const std::string& key, const char* want) {
  return "config key '" + key + "' must be " + want;
}

void assign(const std::string& key, const Json& v, double& out) {
  if (!v.is_number()) throw ValidationError(type_error(key, "a number"));
  out = v.get<double>();
}

void assign(const std::string& key, const Json& v, int& out) {
  if (v.is_number_integer()) {
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ValidationError(type_error(key, "a 32-bit integer"));
    }
    out = static_cast<int>(x);
    return;
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 2147483647.0) {
      out = static_cast<int>(d);
      return;
    }
  }
  throw ValidationError(type_error(key, "an integer"));
}

void assign(const std::string& key, const Json& v, std::uint64_t& out) {
  if (v.is_number_unsigned()) {
    out = v.get<std::uint64_t>();
    return;
  }
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    out = static_cast<std::uint64_t>(v.get<std::int64_t>());
    return;
  }
  throw ValidationError(type_error(key, "a non-negative integer"));
}

void assign(const std::string& key, const Json& v, std::string& out) {
  if (!v.is_string()) throw ValidationError(type_error(key, "a string"));
  out = v.get<std::string>();
}

void assign(const std::string& key, const Json& v, bool& out) {
  if (!v.is_boolean()) throw ValidationError(type_error(key, "a boolean"));
  out = v.get<bool>();
}

void set_field(PipelineConfig& c, const std::string& key, const Json& value) {
  bool found = false;
  visit_fields(c, [&](const char* name, auto& field) {
    if (key == name) {
      assign(key, value, field);
      found = true;
    }
  });
  if (!found) throw ValidationError("unknown config key '" + key + "'");
}

}  // namespace

Json PipelineConfig::to_json() const {
  Json j = Json::object();
  visit_fields(*this, [&](const char* name, const auto& field) { j[name] = field; });
  return j;
}

std::string PipelineConfig::digest() const {
  Json j = to_json();
  for (const auto& key : non_semantic_keys()) j.erase(key);
  return sha256_hex(dump_json(j));
}

PipelineConfig parse_config(const Json& object) {
  if (!object.is_object()) throw ValidationError("config must be a JSON object");
  PipelineConfig c;
  std::vector<std::string> problems;
  for (const auto& [key, value] : object.items()) {
    try {
      set_field(c, key, value);
    } catch (const ValidationError& e) {
      problems.emplace_back(e.what());
    }
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return c;
}

PipelineConfig apply_overrides(const PipelineConfig& base, const std::vector<std::string>& overrides) {
  PipelineConfig c = base;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError("override '" + kv + "' is not key=value");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    Json value = Json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = raw;
    // String fields accept bare values that happen to parse as JSON scalars.
    if (!value.is_string()) {
      bool string_field = false;
      visit_fields(c, [&](const char* name, const auto& field) {
        if (key == name) string_field = std::is_same_v<std::decay_t<decltype(field)>, std::string>;
      });
      if (string_field) value = raw;
    }
    set_field(c, key, value);
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  PipelineConfig c;
  if (!path.empty()) {
    Json j = Json::parse(read_text_file(path), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ValidationError(path.string() + ": malformed JSON");
    c = parse_config(j);
  }
  return validate_config(apply_overrides(c, overrides));
}

std::vector<std::string> config_errors(const PipelineConfig& c) {
  std::vector<std::string> errs;
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) errs.emplace_back("alpha outside [0,1]");
  if (c.k1 < 1) errs.emplace_back("k1 must be positive");
  if (c.k2 < 1) errs.emplace_back("k2 must be positive");
  if (c.k2 > c.k1) errs.emplace_back("k2 exceeds k1");
  if (c.n_shift < 0) errs.emplace_back("n_shift must be non-negative");
  if (c.m_negatives < 1) errs.emplace_back("m_negatives must be positive");
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) errs.emplace_back("tau must be positive");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    errs.emplace_back("learning_rate must be positive");
  }
  if (!(c.weight_decay >= 0.0) || !std::isfinite(c.weight_decay)) {
    errs.emplace_back("weight_decay must be non-negative");
  }
  if (c.epochs < 1) errs.emplace_back("epochs must be at least 1");
  if (c.llm_provider != "mock" && c.llm_provider != "http") {
    errs.emplace_back("llm_provider must be \"mock\" or \"http\"");
  }
  if (c.embed_provider != "mock" && c.embed_provider != "http") {
    errs.emplace_back("embed_provider must be \"mock\" or \"http\"");
  }
  if (c.llm_provider == "http" && c.llm_endpoint.empty()) errs.emplace_back("llm_endpoint required for http provider");
  if (c.embed_provider == "http" && c.embed_endpoint.empty()) {
    errs.emplace_back("embed_endpoint required for http provider");
  }
  if (c.mock_generator != "marker" && c.mock_generator != "canned") {
    errs.emplace_back("mock_generator must be \"marker\" or \"canned\"");
  }
  if (c.embed_provider == "mock" && c.embed_dim < 8) errs.emplace_back("embed_dim must be at least 8");
  if (c.embed_batch < 1) errs.emplace_back("embed_batch must be positive");
  if (c.max_tokens < 1 || c.generator_max_tokens < 1) errs.emplace_back("max_tokens must be positive");
  if (!(c.temperature >= 0.0)) errs.emplace_back("temperature must be non-negative");
  if (c.concurrency < 1) errs.emplace_back("concurrency must be positive");
  if (!(c.requests_per_second >= 0.0)) errs.emplace_back("requests_per_second must be non-negative");
  if (c.max_attempts < 1) errs.emplace_back("max_attempts must be positive");
  if (c.retry_base_ms < 0) errs.emplace_back("retry_base_ms must be non-negative");
  if (c.eval_reranker != "trained" && c.eval_reranker != "base") {
    errs.emplace_back("eval_reranker must be \"trained\" or \"base\"");
  }
  return errs;
}

PipelineConfig validate_config(const PipelineConfig& config) {
  auto errs = config_errors(config);
  if (!errs.empty()) throw ValidationError(std::move(errs));
  return config;
}

}  // namespace ralign
