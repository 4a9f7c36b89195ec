#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/fusion.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/parallel.hpp"
#include "ralign/providers.hpp"
#include "test_support.hpp"

using namespace ralign;

namespace {

// Local stand-in for an OpenAI-style server.
class StubServer {
 public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++chat_calls;
      last_auth = req.get_header_value("Authorization");
      const Json body = Json::parse(req.body);
      last_body = body;
      const std::string user = body["messages"].back()["content"];
      res.set_content(dump_json({{"choices", {{{"message", {{"content", "echo: " + user}}}}}}}),
                      "application/json");
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      ++embed_calls;
      const Json body = Json::parse(req.body);
      Json data = Json::array();
      const auto& input = body["input"];
      // Reversed order with explicit indices.
      for (std::size_t i = input.size(); i-- > 0;) {
        data.push_back({{"index", i}, {"embedding", {static_cast<double>(i) + 1.0, 1.0, 0.0}}});
      }
      res.set_content(dump_json({{"data", data}}), "application/json");
    });
    server_.Post("/unauthorized", [this](const httplib::Request&, httplib::Response& res) {
      ++unauthorized_calls;
      res.status = 401;
    });
    server_.Post("/flaky", [this](const httplib::Request&, httplib::Response& res) {
      if (++flaky_calls <= 2) {
        res.status = 503;
        return;
      }
      res.set_content(R"({"choices":[{"message":{"content":"recovered"}}]})", "application/json");
    });
    server_.Post("/blank", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"choices":[{"message":{"content":"   "}}]})", "application/json");
    });
    server_.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html>", "text/html");
    });
    server_.Post("/ragged", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[{"embedding":[1,2]},{"embedding":[1,2,3]}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

  std::atomic<int> chat_calls{0}, embed_calls{0}, unauthorized_calls{0}, flaky_calls{0};
  std::string last_auth;
  Json last_body;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpOptions fast_options(const std::string& url) {
  HttpOptions o;
  o.url = url;
  o.retry.base_delay = std::chrono::milliseconds(1);
  o.retry.max_delay = std::chrono::milliseconds(2);
  o.connect_timeout = std::chrono::seconds(2);
  o.read_timeout = std::chrono::seconds(5);
  return o;
}

LlmRequest request(std::string user) {
  LlmRequest r;
  r.model_id = "m";
  r.user = std::move(user);
  return r;
}

}  // namespace

TEST_CASE("mock_embed is a deterministic unit bag of words") {
  const auto a = mock_embed("Alpha beta gamma", 64);
  CHECK(a == mock_embed("Alpha beta gamma", 64));
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a == mock_embed("gamma ALPHA   beta", 64));
  CHECK(cosine_similarity(a, mock_embed("delta epsilon zeta", 64)) < 0.99);
  CHECK(mock_embed("x", 16).dim() == 16);
  CHECK_THROWS_AS(mock_embed("x", 4), ValidationError);
  CHECK_THROWS_AS(mock_embed("", 64), ValidationError);
}

TEST_CASE("MockEmbedder counts calls and texts") {
  MockEmbedder e("mock", 32);
  const auto out = e.embed({"one", "two", "three"});
  CHECK(out.size() == 3);
  CHECK(e.calls() == 1);
  CHECK(e.texts_embedded() == 3);
  CHECK_THROWS_AS(e.embed({"ok", ""}), ValidationError);
}

TEST_CASE("MockGenerator serves canned text by prompt hash") {
  MockGenerator g;
  g.add_canned(sha256_hex("hello"), "world");
  CHECK(g.generate(request("hello")) == "world");
  try {
    g.generate(request("other"));
    FAIL("expected not found");
  } catch (const ProviderError& e) {
    CHECK(e.kind() == ProviderErrorKind::kNotFound);
  }
  g.set_fallback([](const LlmRequest&) { return std::string("fallback"); });
  CHECK(g.generate(request("other")) == "fallback");
  CHECK(g.calls() == 3);
}

TEST_CASE("canned completions load from JSONL") {
  const auto dir = test_support::scratch_dir("providers_canned");
  write_jsonl(dir / "c.jsonl", {Json{{"prompt_hash", sha256_hex("p")}, {"text", "t"}}});
  MockGenerator g;
  g.load_canned(dir / "c.jsonl");
  CHECK(g.generate(request("p")) == "t");
  write_jsonl(dir / "bad.jsonl", {Json{{"text", "t"}}});
  CHECK_THROWS_AS(g.load_canned(dir / "bad.jsonl"), ValidationError);
}

TEST_CASE("marker_answer reads the first marked answer from the system prompt") {
  LlmRequest r = request("Question: q\nAnswer:");
  r.system = "Docs\nDoc 1 noise\nDoc 2 So THE ANSWER IS Lagos State. more\nDoc 3 the answer is other";
  CHECK(marker_answer(r, "the answer is ") == "Lagos State");
  r.system = "Doc 1 so the answer is ans7";
  CHECK(marker_answer(r, "the answer is ") == "ans7");
  r.system = "Doc 1 nothing here";
  CHECK(marker_answer(r, "the answer is ") == "unknown");
}

TEST_CASE("cache keys separate model ids and payloads") {
  CHECK(cache_key("ab", "c") != cache_key("a", "bc"));
  CHECK(cache_key("m", "x") == cache_key("m", "x"));
  CHECK(is_hex64(cache_key("m", "x")));
  auto a = request("u");
  auto b = a;
  b.temperature = 0.5;
  CHECK(generation_payload(a) != generation_payload(b));
  CHECK(prompt_hash(a) == prompt_hash(b));
}

TEST_CASE("JsonlStore persists and the last record wins") {
  const auto dir = test_support::scratch_dir("providers_store");
  {
    JsonlStore s(dir / "s.jsonl");
    s.put("k", Json{{"key", "k"}, {"v", 1}});
    s.put("k", Json{{"key", "k"}, {"v", 2}});
    s.put("j", Json{{"key", "j"}, {"v", 3}});
  }
  JsonlStore reopened(dir / "s.jsonl");
  CHECK(reopened.size() == 2);
  CHECK(reopened.get("k")->at("v") == 2);
  CHECK_FALSE(reopened.get("missing"));
}

TEST_CASE("CachedEmbedder deduplicates misses and serves repeats from disk") {
  const auto dir = test_support::scratch_dir("providers_embed_cache");
  MockEmbedder inner("mock", 32);
  {
    EmbeddingCache cache(dir / "e.jsonl");
    CachedEmbedder cached(inner, cache);
    const auto out = cached.embed({"a", "b", "a"});
    CHECK(out[0] == out[2]);
    CHECK(inner.texts_embedded() == 2);
    CHECK(cached.misses() == 2);
  }
  EmbeddingCache cache(dir / "e.jsonl");
  CachedEmbedder cached(inner, cache);
  const auto again = cached.embed({"b", "a"});
  CHECK(again[1] == mock_embed("a", 32));
  CHECK(inner.calls() == 1);
  CHECK(cached.hits() == 2);
}

TEST_CASE("CachedGenerator serves identical requests once") {
  MockGenerator inner([](const LlmRequest& r) { return "re: " + r.user; });
  GenerationCache cache;
  CachedGenerator g(inner, cache);
  CHECK(g.generate(request("x")) == "re: x");
  CHECK(g.generate(request("x")) == "re: x");
  CHECK(inner.calls() == 1);
  CHECK(g.hits() == 1);
}

TEST_CASE("with_retry retries only transient errors") {
  RetryPolicy policy;
  policy.base_delay = std::chrono::milliseconds(1);
  int calls = 0;
  CHECK(with_retry(policy, [&] {
          if (++calls < 3) throw ProviderError(ProviderErrorKind::kTransport, "down");
          return 7;
        }) == 7);
  CHECK(calls == 3);

  calls = 0;
  try {
    with_retry(policy, [&]() -> int {
      ++calls;
      throw ProviderError(ProviderErrorKind::kAuthentication, "denied");
    });
  } catch (const ProviderError& e) {
    CHECK(e.attempts() == 1);
  }
  CHECK(calls == 1);
}

TEST_CASE("retry delays grow and are capped") {
  RetryPolicy p;
  CHECK(p.delay_after(1) <= p.delay_after(2));
  CHECK(p.delay_after(30) <= p.max_delay);
}

TEST_CASE("parse_endpoint") {
  const auto ep = parse_endpoint("https://api.example.com/v1/chat/completions");
  CHECK(ep.scheme == "https");
  CHECK(ep.host == "api.example.com");
  CHECK(ep.port == 443);
  CHECK(ep.path == "/v1/chat/completions");
  CHECK(parse_endpoint("http://localhost:8080").path == "/");
  CHECK(parse_endpoint("http://localhost:8080").port == 8080);
  CHECK_THROWS_AS(parse_endpoint("localhost/x"), ValidationError);
  CHECK_THROWS_AS(parse_endpoint("ftp://h/x"), ValidationError);
}

TEST_CASE("HTTP chat and embedding clients against a stub server") {
  StubServer stub;

  SUBCASE("chat completion with bearer token") {
    auto opts = fast_options(stub.url("/v1/chat/completions"));
    opts.api_key = "sk-test";
    HttpChatClient chat(opts);
    LlmRequest r = request("hi");
    r.system = "sys";
    CHECK(chat.generate(r) == "echo: hi");
    CHECK(stub.last_auth == "Bearer sk-test");
    CHECK(stub.last_body["messages"].size() == 2);
    CHECK(stub.last_body["model"] == "m");
  }
  SUBCASE("embeddings honour the index field") {
    HttpEmbeddingClient embed(fast_options(stub.url("/v1/embeddings")), "emb");
    const auto out = embed.embed({"a", "b", "c"});
    REQUIRE(out.size() == 3);
    CHECK(out[0][0] == 1.0);
    CHECK(out[2][0] == 3.0);
  }
  SUBCASE("401 is not retried") {
    HttpChatClient chat(fast_options(stub.url("/unauthorized")));
    try {
      chat.generate(request("x"));
      FAIL("expected auth error");
    } catch (const ProviderError& e) {
      CHECK(e.kind() == ProviderErrorKind::kAuthentication);
      CHECK(e.exit_code() == ExitCode::kProvider);
    }
    CHECK(stub.unauthorized_calls == 1);
  }
  SUBCASE("5xx is retried until success") {
    HttpChatClient chat(fast_options(stub.url("/flaky")));
    CHECK(chat.generate(request("x")) == "recovered");
    CHECK(chat.attempts() == 3);
  }
  SUBCASE("blank completion is an error") {
    HttpChatClient chat(fast_options(stub.url("/blank")));
    try {
      chat.generate(request("x"));
      FAIL("expected empty completion");
    } catch (const ProviderError& e) {
      CHECK(e.kind() == ProviderErrorKind::kEmptyCompletion);
    }
  }
  SUBCASE("non-JSON body is malformed") {
    HttpChatClient chat(fast_options(stub.url("/garbage")));
    CHECK_THROWS_AS(chat.generate(request("x")), ProviderError);
  }
  SUBCASE("mixed dims in one batch") {
    HttpEmbeddingClient embed(fast_options(stub.url("/ragged")), "emb");
    try {
      embed.embed({"a", "b"});
      FAIL("expected dimension mismatch");
    } catch (const ProviderError& e) {
      CHECK(e.kind() == ProviderErrorKind::kDimensionMismatch);
    }
  }
}

TEST_CASE("unreachable endpoint fails after max attempts") {
  HttpChatClient chat(fast_options("http://127.0.0.1:1/v1/chat/completions"));
  try {
    chat.generate(request("x"));
    FAIL("expected transport error");
  } catch (const ProviderError& e) {
    CHECK(e.kind() == ProviderErrorKind::kTransport);
    CHECK(e.attempts() == 5);
    CHECK(std::string(e.what()).find("after 5 attempts") != std::string::npos);
  }
  CHECK(chat.attempts() == 5);
}

TEST_CASE("API keys come from the environment") {
  ::setenv("RALIGN_TEST_KEY", "secret", 1);
  CHECK(api_key_from_env("RALIGN_TEST_KEY") == "secret");
  ::unsetenv("RALIGN_TEST_KEY");
  CHECK(api_key_from_env("RALIGN_TEST_KEY").empty());
}

TEST_CASE("parallel_for writes by index and rethrows") {
  std::vector<int> out(100);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 5) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}
