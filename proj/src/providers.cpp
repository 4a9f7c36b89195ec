#include "ralign/providers.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <unordered_set>

#include "ralign/digest.hpp"
#include "ralign/jsonl.hpp"

namespace ralign {
namespace {

std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool blank(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

void check_request(const LlmRequest& request) {
  if (request.user.empty()) throw ValidationError("LLM request has empty user text");
  if (request.max_tokens < 1) throw ValidationError("LLM request max_tokens must be positive");
  if (!(request.temperature >= 0.0)) throw ValidationError("LLM request temperature must be non-negative");
}

void check_request(const EmbedRequest& request) {
  if (request.texts.empty()) throw ValidationError("embed request has no texts");
  for (const auto& t : request.texts) {
    if (t.empty()) throw ValidationError("embed request contains an empty text");
  }
}

std::string cache_key(std::string_view model_id, std::string_view payload) {
  std::string buf = std::to_string(model_id.size());
  buf += ':';
  buf += model_id;
  buf += payload;
  return sha256_hex(buf);
}

std::string generation_payload(const LlmRequest& request) {
  Json j{{"system", request.system ? Json(*request.system) : Json(nullptr)},
         {"user", request.user},
         {"max_tokens", request.max_tokens},
         {"temperature", request.temperature}};
  return dump_json(j);
}

std::string prompt_hash(const LlmRequest& request) { return sha256_hex(request.user); }

// ---------------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const noexcept {
  auto delay = base_delay;
  for (int i = 1; i < attempt && delay < max_delay; ++i) delay *= 2;
  return std::min(delay, max_delay);
}

RateLimiter::RateLimiter(double requests_per_second) {
  if (requests_per_second > 0.0) {
    interval_ = std::chrono::nanoseconds(static_cast<long long>(1e9 / requests_per_second));
  }
}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

// ---------------------------------------------------------------------------

EmbeddingVector mock_embed(std::string_view text, std::size_t dim) {
  if (dim < 8) throw ValidationError("mock_embed: dim must be at least 8");
  if (text.empty()) throw ValidationError("mock_embed: empty text");
  std::vector<double> v(dim, 0.0);
  const std::string lowered = lower_ascii(text);
  std::size_t i = 0;
  while (i < lowered.size()) {
    while (i < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
    std::size_t j = i;
    while (j < lowered.size() && !std::isspace(static_cast<unsigned char>(lowered[j]))) ++j;
    if (j > i) {
      const std::uint64_t h = mix64(fnv1a64(std::string_view(lowered).substr(i, j - i)));
      const double sign = (h >> 63) ? -1.0 : 1.0;
      v[h % dim] += sign;
    }
    i = j;
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 == 0.0) {
    v[0] = 1.0;
    return EmbeddingVector(std::move(v));
  }
  const double norm = std::sqrt(norm2);
  for (double& x : v) x /= norm;
  return EmbeddingVector(std::move(v));
}

MockEmbedder::MockEmbedder(std::string model_id, std::size_t dim) : model_id_(std::move(model_id)), dim_(dim) {
  if (dim_ < 8) throw ValidationError("mock embedder dim must be at least 8");
}

std::vector<EmbeddingVector> MockEmbedder::embed_batch(const EmbedRequest& request) {
  check_request(request);
  calls_.fetch_add(1);
  texts_.fetch_add(static_cast<long>(request.texts.size()));
  std::vector<EmbeddingVector> out;
  out.reserve(request.texts.size());
  for (const auto& t : request.texts) out.push_back(mock_embed(t, dim_));
  return out;
}

void MockGenerator::add_canned(std::string hash, std::string text) { canned_[std::move(hash)] = std::move(text); }

void MockGenerator::load_canned(const std::filesystem::path& path) {
  for_each_jsonl(path, [&](JsonLine&& jl) {
    const auto& v = jl.value;
    if (!v.is_object() || !v.contains("prompt_hash") || !v.contains("text") || !v["prompt_hash"].is_string() ||
        !v["text"].is_string()) {
      throw ValidationError(path.string() + ": line " + std::to_string(jl.line) +
                            ": expected {\"prompt_hash\", \"text\"}");
    }
    add_canned(v["prompt_hash"].get<std::string>(), v["text"].get<std::string>());
  });
}

std::string MockGenerator::generate(const LlmRequest& request) {
  check_request(request);
  calls_.fetch_add(1);
  if (auto it = canned_.find(prompt_hash(request)); it != canned_.end()) return it->second;
  if (fallback_) return fallback_(request);
  throw ProviderError(ProviderErrorKind::kNotFound, "no canned completion for prompt " + prompt_hash(request));
}

std::string marker_answer(const LlmRequest& request, std::string_view marker) {
  if (!request.system || marker.empty()) return "unknown";
  const std::string hay = lower_ascii(*request.system);
  const std::string needle = lower_ascii(marker);
  const auto pos = hay.find(needle);
  if (pos == std::string::npos) return "unknown";
  const auto start = pos + needle.size();
  auto end = request.system->find_first_of(".\n", start);
  if (end == std::string::npos) end = request.system->size();
  std::string answer = request.system->substr(start, end - start);
  const auto first = answer.find_first_not_of(" \t");
  const auto last = answer.find_last_not_of(" \t");
  if (first == std::string::npos) return "unknown";
  return answer.substr(first, last - first + 1);
}

// ---------------------------------------------------------------------------

std::string api_key_from_env(const std::string& variable) {
  if (variable.empty()) return {};
  const char* v = std::getenv(variable.c_str());
  return v ? std::string(v) : std::string();
}

// ---------------------------------------------------------------------------

JsonlStore::JsonlStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    Json rec = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    // A torn final line from a crash is skipped; every complete line is kept.
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("key") || !rec["key"].is_string()) continue;
    std::string key = rec["key"].get<std::string>();
    records_[std::move(key)] = std::move(rec);
  }
}

std::optional<Json> JsonlStore::get(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void JsonlStore::put(const std::string& key, Json record) {
  record["key"] = key;
  std::unique_lock lock(mu_);
  if (!path_.empty()) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + path_.string());
    out << dump_json(record) << '\n';
    out.flush();
  }
  records_[key] = std::move(record);
}

std::size_t JsonlStore::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::optional<EmbeddingVector> EmbeddingCache::get(const std::string& key) const {
  auto rec = store_.get(key);
  if (!rec) return std::nullopt;
  try {
    auto values = (*rec).at("values").get<std::vector<double>>();
    if (values.size() != (*rec).at("dim").get<std::size_t>()) return std::nullopt;
    return EmbeddingVector(std::move(values));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void EmbeddingCache::put(const std::string& key, const EmbeddingVector& vec) {
  Json values(std::vector<double>(vec.values().begin(), vec.values().end()));
  store_.put(key, Json{{"dim", vec.dim()}, {"values", std::move(values)}});
}

std::optional<std::string> GenerationCache::get(const std::string& key) const {
  auto rec = store_.get(key);
  if (!rec || !(*rec).contains("text") || !(*rec)["text"].is_string()) return std::nullopt;
  return (*rec)["text"].get<std::string>();
}

void GenerationCache::put(const std::string& key, const std::string& text) {
  store_.put(key, Json{{"text", text}});
}

std::vector<EmbeddingVector> CachedEmbedder::embed_batch(const EmbedRequest& request) {
  check_request(request);
  const std::size_t n = request.texts.size();
  std::vector<std::optional<EmbeddingVector>> out(n);
  std::vector<std::string> keys(n);
  std::vector<std::string> miss_texts;
  std::unordered_map<std::string, std::size_t> miss_slot;
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = cache_key(request.model_id, request.texts[i]);
    if (auto hit = cache_.get(keys[i])) {
      out[i] = std::move(*hit);
      hits_.fetch_add(1);
    } else if (!miss_slot.contains(keys[i])) {
      miss_slot.emplace(keys[i], miss_texts.size());
      miss_texts.push_back(request.texts[i]);
    }
  }
  if (!miss_texts.empty()) {
    misses_.fetch_add(static_cast<long>(miss_texts.size()));
    auto fresh = inner_.embed_batch(EmbedRequest{request.model_id, miss_texts});
    if (fresh.size() != miss_texts.size()) {
      throw ProviderError(ProviderErrorKind::kMalformedResponse, "embedder returned " + std::to_string(fresh.size()) +
                                                                     " vectors for " +
                                                                     std::to_string(miss_texts.size()) + " texts");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (out[i]) continue;
      out[i] = fresh[miss_slot.at(keys[i])];
    }
    for (const auto& [key, slot] : miss_slot) cache_.put(key, fresh[slot]);
  }
  std::vector<EmbeddingVector> result;
  result.reserve(n);
  for (auto& v : out) result.push_back(std::move(*v));
  for (const auto& v : result) {
    if (v.dim() != result.front().dim()) {
      throw ProviderError(ProviderErrorKind::kDimensionMismatch,
                          "embedding dims differ within a batch (" + std::to_string(result.front().dim()) + " vs " +
                              std::to_string(v.dim()) + ")");
    }
  }
  return result;
}

std::string CachedGenerator::generate(const LlmRequest& request) {
  check_request(request);
  const auto key = cache_key(request.model_id, generation_payload(request));
  if (auto hit = cache_.get(key)) {
    hits_.fetch_add(1);
    return *hit;
  }
  std::string text = inner_.generate(request);
  cache_.put(key, text);
  return text;
}

}  // namespace ralign
