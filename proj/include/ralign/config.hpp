#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ralign/types.hpp"

namespace ralign {

enum class ProviderKind { kMock, kHttp };

/// Every tunable of a pipeline run. Field names match the config-file keys.
struct PipelineConfig {
  // Alignment hyperparameters.
  double alpha = 0.5;
  int k1 = 20;
  int k2 = 5;
  int n_shift = 3;
  int m_negatives = 6;
  double tau = 0.05;
  double learning_rate = 6e-5;
  double weight_decay = 0.01;
  int epochs = 3;
  std::uint64_t seed = 0;

  // Inputs and run layout.
  std::string dataset_path;
  std::string corpus_path;
  std::string runs_root = "runs";
  std::string cache_dir = "cache";

  // Text generation (rationale extraction and the RAG generator).
  std::string llm_provider = "mock";  // "mock" | "http"
  std::string llm_endpoint;           // full URL of the chat-completions route
  std::string llm_api_key_env = "OPENAI_API_KEY";
  std::string rationale_model = "mock-rationale";
  std::string generator_model = "mock-generator";
  int max_tokens = 256;
  int generator_max_tokens = 32;
  double temperature = 0.0;
  bool join_answers = false;
  std::string mock_canned_path;  // JSONL {"prompt_hash","text"} for the mock LLM
  std::string mock_generator = "marker";  // "marker" | "canned"
  std::string mock_marker = "the answer is ";

  // Embeddings.
  std::string embed_provider = "mock";  // "mock" | "http"
  std::string embed_endpoint;
  std::string embed_api_key_env = "OPENAI_API_KEY";
  std::string embed_model = "mock-embed";
  int embed_dim = 64;  // mock embedder only
  int embed_batch = 32;

  // Execution.
  int concurrency = 4;
  double requests_per_second = 0.0;  // 0 = unlimited
  int max_attempts = 5;
  int retry_base_ms = 200;
  std::string eval_reranker = "trained";  // "trained" | "base"

  Json to_json() const;
  /// Digest over the fields that influence artifacts (paths and execution
  /// knobs excluded).
  std::string digest() const;
};

/// Builds a config from a flat JSON object; absent keys keep their defaults.
/// Unknown keys and wrongly typed values raise ValidationError.
PipelineConfig parse_config(const Json& object);

/// Applies "key=value" overrides on top of `base`. Values are parsed as JSON
/// when possible, otherwise taken as strings.
PipelineConfig apply_overrides(const PipelineConfig& base, const std::vector<std::string>& overrides);

/// File (optional, may be empty) + overrides + validation.
PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// All invariant violations, empty when valid.
std::vector<std::string> config_errors(const PipelineConfig& config);

/// Returns `config` unchanged or throws ValidationError listing every problem.
PipelineConfig validate_config(const PipelineConfig& config);

}  // namespace ralign
