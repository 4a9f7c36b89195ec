#pragma once

// LLM generation and text-embedding providers: abstract interfaces, HTTP
// clients for JSON chat/embedding APIs, deterministic offline mocks, and
// content-addressed on-disk caches.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ralign/error.hpp"
#include "ralign/types.hpp"

namespace ralign {

struct LlmRequest {
  std::string model_id;
  std::optional<std::string> system;
  std::string user;
  int max_tokens = 256;
  double temperature = 0.0;
};

struct EmbedRequest {
  std::string model_id;
  std::vector<std::string> texts;
};

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const LlmRequest& request) = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// One vector per input text, in input order, all of one dimension.
  virtual std::vector<EmbeddingVector> embed_batch(const EmbedRequest& request) = 0;
  virtual const std::string& model_id() const = 0;

  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) {
    return embed_batch(EmbedRequest{model_id(), texts});
  }
  EmbeddingVector embed_one(const std::string& text) { return embed({text}).front(); }
};

/// Throws ValidationError unless user text and every embed text are non-empty.
void check_request(const LlmRequest& request);
void check_request(const EmbedRequest& request);

/// Collision-resistant key for (model_id, payload): sha256 over a
/// length-prefixed encoding, so distinct pairs never share a preimage.
std::string cache_key(std::string_view model_id, std::string_view payload);

/// Canonical payload of a generation request (everything except model_id).
std::string generation_payload(const LlmRequest& request);

/// sha256 hex of the text a mock keys its canned answers by: the user prompt.
std::string prompt_hash(const LlmRequest& request);

// ---------------------------------------------------------------------------
// Retry and rate limiting

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{200};
  std::chrono::milliseconds max_delay{5000};

  std::chrono::milliseconds delay_after(int attempt) const noexcept;
};

/// Calls fn until it succeeds, a non-transient ProviderError escapes, or
/// max_attempts is reached. The rethrown error reports the attempt count.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const ProviderError& e) {
      if (!e.transient() || attempt >= policy.max_attempts) {
        throw ProviderError(e.kind(), std::string(e.what()) + " (after " + std::to_string(attempt) +
                                          (attempt == 1 ? " attempt)" : " attempts)"),
                            attempt);
      }
      std::this_thread::sleep_for(policy.delay_after(attempt));
    }
  }
}

/// Minimum spacing between requests; 0 requests per second disables it.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second = 0.0);
  void acquire();

 private:
  std::mutex mu_;
  std::chrono::nanoseconds interval_{0};
  std::chrono::steady_clock::time_point next_{};
};

// ---------------------------------------------------------------------------
// Mocks

/// Deterministic bag-of-hashed-tokens embedding: lowercase, split on
/// whitespace, each token adds +-1 to one of `dim` buckets, L2-normalized.
/// If every contribution cancels, bucket 0 is set to 1. Requires dim >= 8
/// and non-empty text.
EmbeddingVector mock_embed(std::string_view text, std::size_t dim);

class MockEmbedder : public Embedder {
 public:
  MockEmbedder(std::string model_id, std::size_t dim);

  std::vector<EmbeddingVector> embed_batch(const EmbedRequest& request) override;
  const std::string& model_id() const override { return model_id_; }
  std::size_t dim() const noexcept { return dim_; }

  long calls() const noexcept { return calls_.load(); }
  long texts_embedded() const noexcept { return texts_.load(); }

 private:
  std::string model_id_;
  std::size_t dim_;
  std::atomic<long> calls_{0};
  std::atomic<long> texts_{0};
};

/// Canned completions keyed by prompt_hash(), with an optional fallback.
/// Without a canned entry or fallback, generate() throws ProviderError(kNotFound).
class MockGenerator : public TextGenerator {
 public:
  using Fallback = std::function<std::string(const LlmRequest&)>;

  MockGenerator() = default;
  explicit MockGenerator(Fallback fallback) : fallback_(std::move(fallback)) {}

  void add_canned(std::string prompt_hash, std::string text);
  /// Loads JSONL records {"prompt_hash": hex64, "text": ...}.
  void load_canned(const std::filesystem::path& path);
  void set_fallback(Fallback fallback) { fallback_ = std::move(fallback); }

  std::string generate(const LlmRequest& request) override;
  long calls() const noexcept { return calls_.load(); }

 private:
  std::unordered_map<std::string, std::string> canned_;
  Fallback fallback_;
  std::atomic<long> calls_{0};
};

/// Offline generator that answers from context: finds `marker` (case-insensitive)
/// in the system prompt's reference block and returns the text after it up to
/// the next '.' or newline. Answers "unknown" when the marker is absent.
std::string marker_answer(const LlmRequest& request, std::string_view marker);

// ---------------------------------------------------------------------------
// HTTP clients

struct HttpEndpoint {
  std::string scheme;  // "http" | "https"
  std::string host;
  int port = 0;
  std::string path;

  std::string origin() const;
};

/// Parses "http[s]://host[:port]/path". Throws ValidationError.
HttpEndpoint parse_endpoint(const std::string& url);

struct HttpOptions {
  std::string url;
  std::string api_key;  // sent as a Bearer token when non-empty
  RetryPolicy retry;
  double requests_per_second = 0.0;
  std::chrono::seconds connect_timeout{5};
  std::chrono::seconds read_timeout{120};
};

/// Reads the API key from the named environment variable ("" when unset).
std::string api_key_from_env(const std::string& variable);

/// POST {"model","messages","max_tokens","temperature"} ->
/// {"choices":[{"message":{"content"}}]}.
class HttpChatClient : public TextGenerator {
 public:
  explicit HttpChatClient(HttpOptions options);
  std::string generate(const LlmRequest& request) override;
  long attempts() const noexcept { return attempts_.load(); }

 private:
  std::string post_once(const std::string& body);

  HttpOptions options_;
  HttpEndpoint endpoint_;
  RateLimiter limiter_;
  std::atomic<long> attempts_{0};
};

/// POST {"model","input":[texts]} -> {"data":[{"embedding":[...]}, ...]}.
class HttpEmbeddingClient : public Embedder {
 public:
  HttpEmbeddingClient(HttpOptions options, std::string model_id);
  std::vector<EmbeddingVector> embed_batch(const EmbedRequest& request) override;
  const std::string& model_id() const override { return model_id_; }
  long attempts() const noexcept { return attempts_.load(); }

 private:
  HttpOptions options_;
  HttpEndpoint endpoint_;
  std::string model_id_;
  RateLimiter limiter_;
  std::atomic<long> attempts_{0};
};

// ---------------------------------------------------------------------------
// Caches

/// Append-only JSONL store of JSON records with a string "key" field. Loaded
/// fully on open; the last record for a key wins. Reads may run concurrently;
/// appends are serialized. An empty path keeps everything in memory.
class JsonlStore {
 public:
  explicit JsonlStore(std::filesystem::path path = {});

  std::optional<Json> get(const std::string& key) const;
  void put(const std::string& key, Json record);
  std::size_t size() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, Json> records_;
};

/// Records {"key": hex64, "dim": int, "values": [reals]}.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path = {}) : store_(std::move(path)) {}
  std::optional<EmbeddingVector> get(const std::string& key) const;
  void put(const std::string& key, const EmbeddingVector& vec);
  std::size_t size() const { return store_.size(); }

 private:
  JsonlStore store_;
};

/// Records {"key": hex64, "text": text}.
class GenerationCache {
 public:
  explicit GenerationCache(std::filesystem::path path = {}) : store_(std::move(path)) {}
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& text);
  std::size_t size() const { return store_.size(); }

 private:
  JsonlStore store_;
};

/// Serves repeated texts from the cache; misses go to the inner embedder in
/// one deduplicated request. All vectors in a batch must share one dim.
class CachedEmbedder : public Embedder {
 public:
  CachedEmbedder(Embedder& inner, EmbeddingCache& cache) : inner_(inner), cache_(cache) {}
  std::vector<EmbeddingVector> embed_batch(const EmbedRequest& request) override;
  const std::string& model_id() const override { return inner_.model_id(); }

  long hits() const noexcept { return hits_.load(); }
  long misses() const noexcept { return misses_.load(); }

 private:
  Embedder& inner_;
  EmbeddingCache& cache_;
  std::atomic<long> hits_{0};
  std::atomic<long> misses_{0};
};

class CachedGenerator : public TextGenerator {
 public:
  CachedGenerator(TextGenerator& inner, GenerationCache& cache) : inner_(inner), cache_(cache) {}
  std::string generate(const LlmRequest& request) override;
  long hits() const noexcept { return hits_.load(); }

 private:
  TextGenerator& inner_;
  GenerationCache& cache_;
  std::atomic<long> hits_{0};
};

}  // namespace ralign
