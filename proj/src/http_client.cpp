#include <httplib.h>

#include <cctype>

#include "ralign/jsonl.hpp"
#include "ralign/providers.hpp"

namespace ralign {
namespace {

bool blank(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

// Classifies a finished exchange; returns the body on 2xx.
std::string post_json(const HttpEndpoint& ep, const HttpOptions& opts, const std::string& body) {
  httplib::Client client(ep.origin());
  client.set_connection_timeout(opts.connect_timeout);
  client.set_read_timeout(opts.read_timeout);
  client.set_write_timeout(opts.read_timeout);
  httplib::Headers headers;
  if (!opts.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts.api_key);
  auto res = client.Post(ep.path, headers, body, "application/json");
  if (!res) {
    throw ProviderError(ProviderErrorKind::kTransport, ep.origin() + ep.path + ": " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw ProviderError(ProviderErrorKind::kAuthentication, "HTTP " + std::to_string(status));
  }
  if (status == 408 || status == 429 || status >= 500) {
    throw ProviderError(ProviderErrorKind::kTransport, "HTTP " + std::to_string(status));
  }
  if (status < 200 || status >= 300) {
    throw ProviderError(ProviderErrorKind::kBadRequest, "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
  }
  return res->body;
}

Json parse_body(const std::string& body) {
  Json j = Json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ProviderError(ProviderErrorKind::kMalformedResponse, "response is not JSON");
  return j;
}

}  // namespace

std::string HttpEndpoint::origin() const {
  return scheme + "://" + host + ":" + std::to_string(port);
}

HttpEndpoint parse_endpoint(const std::string& url) {
  HttpEndpoint ep;
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw ValidationError("endpoint '" + url + "' lacks a scheme");
  ep.scheme = url.substr(0, sep);
  if (ep.scheme != "http" && ep.scheme != "https") {
    throw ValidationError("endpoint '" + url + "' must use http or https");
  }
  const auto rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  const auto authority = rest.substr(0, slash);
  ep.path = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    ep.host = authority.substr(0, colon);
    try {
      ep.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("endpoint '" + url + "' has a bad port");
    }
  } else {
    ep.host = authority;
    ep.port = ep.scheme == "https" ? 443 : 80;
  }
  if (ep.host.empty()) throw ValidationError("endpoint '" + url + "' has no host");
  return ep;
}

HttpChatClient::HttpChatClient(HttpOptions options)
    : options_(std::move(options)),
      endpoint_(parse_endpoint(options_.url)),
      limiter_(options_.requests_per_second) {}

std::string HttpChatClient::post_once(const std::string& body) {
  limiter_.acquire();
  attempts_.fetch_add(1);
  return post_json(endpoint_, options_, body);
}

std::string HttpChatClient::generate(const LlmRequest& request) {
  check_request(request);
  Json messages = Json::array();
  if (request.system) messages.push_back({{"role", "system"}, {"content", *request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  const Json payload{{"model", request.model_id},
                     {"messages", messages},
                     {"max_tokens", request.max_tokens},
                     {"temperature", request.temperature}};
  const std::string body = dump_json(payload);
  return with_retry(options_.retry, [&] {
    const Json j = parse_body(post_once(body));
    const auto* content = [&]() -> const Json* {
      if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return nullptr;
      const auto& first = j["choices"][0];
      if (!first.contains("message") || !first["message"].contains("content")) return nullptr;
      return &first["message"]["content"];
    }();
    if (content == nullptr || !(content->is_string() || content->is_null())) {
      throw ProviderError(ProviderErrorKind::kMalformedResponse, "missing choices[0].message.content");
    }
    std::string text = content->is_null() ? std::string() : content->get<std::string>();
    if (blank(text)) throw ProviderError(ProviderErrorKind::kEmptyCompletion, "completion is empty");
    return text;
  });
}

HttpEmbeddingClient::HttpEmbeddingClient(HttpOptions options, std::string model_id)
    : options_(std::move(options)),
      endpoint_(parse_endpoint(options_.url)),
      model_id_(std::move(model_id)),
      limiter_(options_.requests_per_second) {}

std::vector<EmbeddingVector> HttpEmbeddingClient::embed_batch(const EmbedRequest& request) {
  check_request(request);
  const std::string body = dump_json(Json{{"model", request.model_id}, {"input", request.texts}});
  return with_retry(options_.retry, [&] {
    limiter_.acquire();
    attempts_.fetch_add(1);
    const Json j = parse_body(post_json(endpoint_, options_, body));
    if (!j.contains("data") || !j["data"].is_array() || j["data"].size() != request.texts.size()) {
      throw ProviderError(ProviderErrorKind::kMalformedResponse, "expected one data entry per input");
    }
    // Servers may tag entries with "index"; honour it when present.
    std::vector<std::optional<EmbeddingVector>> slots(request.texts.size());
    for (std::size_t i = 0; i < j["data"].size(); ++i) {
      const auto& entry = j["data"][i];
      std::size_t slot = i;
      if (entry.contains("index") && entry["index"].is_number_unsigned()) slot = entry["index"].get<std::size_t>();
      if (slot >= slots.size() || slots[slot] || !entry.contains("embedding") || !entry["embedding"].is_array()) {
        throw ProviderError(ProviderErrorKind::kMalformedResponse, "bad embedding entry " + std::to_string(i));
      }
      std::vector<double> values;
      for (const auto& x : entry["embedding"]) {
        if (!x.is_number()) throw ProviderError(ProviderErrorKind::kMalformedResponse, "non-numeric embedding value");
        values.push_back(x.get<double>());
      }
      try {
        slots[slot] = EmbeddingVector(std::move(values));
      } catch (const ValidationError& e) {
        throw ProviderError(ProviderErrorKind::kMalformedResponse, e.what());
      }
    }
    std::vector<EmbeddingVector> out;
    out.reserve(slots.size());
    const std::size_t dim = slots.front()->dim();
    for (auto& s : slots) {
      if (s->dim() != dim) {
        throw ProviderError(ProviderErrorKind::kDimensionMismatch, "embedding dims differ within a batch");
      }
      out.push_back(std::move(*s));
    }
    return out;
  });
}

}  // namespace ralign
