#include <doctest.h>

#include <set>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/rationale.hpp"
#include "test_support.hpp"

using namespace ralign;

namespace {

QueryRecord record(std::string id, std::string q, std::vector<std::string> answers) {
  QueryRecord r;
  r.id = std::move(id);
  r.question = std::move(q);
  r.answers = std::move(answers);
  return r;
}

}  // namespace

TEST_CASE("rationale prompt text") {
  CHECK(build_rationale_prompt("Who wrote Hamlet?", "Shakespeare") ==
        "You are a professional QA assistant. Given a question and the ground truth answer, you can output the "
        "rationale why the ground truth answer is correct. Question: Who wrote Hamlet?. Answer: Shakespeare. "
        "Rationale: ");
  CHECK_THROWS_AS(build_rationale_prompt("", "a"), ValidationError);
  CHECK_THROWS_AS(build_rationale_prompt("q", ""), ValidationError);
  // Placeholder-looking text inside the question is not substituted again.
  CHECK(build_rationale_prompt("What is {answer}?", "x").find("What is {answer}?") != std::string::npos);
}

TEST_CASE("prompt answer uses the first gold unless joined") {
  const auto r = record("q", "Q", {"one", "two"});
  CHECK(prompt_answer(r, false) == "one");
  CHECK(prompt_answer(r, true) == "one; two");
}

TEST_CASE("extract_rationale records provenance and caches") {
  const auto r = record("q1", "Who?", {"Ann"});
  const auto prompt = build_rationale_prompt("Who?", "Ann");
  MockGenerator llm;
  llm.add_canned(sha256_hex(prompt), "  Ann is named in the text.\n");
  RationaleStore store;
  RationaleOptions options;
  options.model_id = "m1";

  const auto first = extract_rationale(llm, r, options, store);
  CHECK(first.text == "Ann is named in the text.");
  CHECK(first.query_id == "q1");
  CHECK(first.model_id == "m1");
  CHECK(first.prompt_hash == sha256_hex(prompt));
  const auto second = extract_rationale(llm, r, options, store);
  CHECK(second == first);
  CHECK(llm.calls() == 1);

  options.model_id = "m2";
  extract_rationale(llm, r, options, store);
  CHECK(llm.calls() == 2);
  CHECK(store.size() == 2);
}

TEST_CASE("blank completions are errors and are not stored") {
  MockGenerator llm([](const LlmRequest&) { return std::string(" \n "); });
  RationaleStore store;
  CHECK_THROWS_WITH_AS(extract_rationale(llm, record("q1", "Who?", {"Ann"}), {}, store),
                       doctest::Contains("blank rationale"), Error);
  CHECK(store.size() == 0);
}

TEST_CASE("rationale store persists across reopen") {
  const auto dir = test_support::scratch_dir("rationale_store");
  MockGenerator llm([](const LlmRequest& r) { return "because " + r.user.substr(r.user.size() - 20); });
  {
    RationaleStore store(dir / "r.jsonl");
    extract_rationale(llm, record("q1", "Who?", {"Ann"}), {}, store);
  }
  RationaleStore store(dir / "r.jsonl");
  CHECK(store.size() == 1);
  extract_rationale(llm, record("q1", "Who?", {"Ann"}), {}, store);
  CHECK(llm.calls() == 1);
}

TEST_CASE("extract_all reports partial failures in dataset order") {
  std::vector<QueryRecord> dataset;
  for (int i = 0; i < 10; ++i) dataset.push_back(record("q" + std::to_string(i), "Q" + std::to_string(i), {"a"}));
  const std::set<std::string> failing{"Q3", "Q7"};
  MockGenerator llm([&](const LlmRequest& r) -> std::string {
    for (const auto& f : failing) {
      if (r.user.find("Question: " + f + ".") != std::string::npos) {
        throw ProviderError(ProviderErrorKind::kBadRequest, "rejected");
      }
    }
    return "fine";
  });
  RationaleStore store;
  RationaleOptions options;
  options.concurrency = 3;
  const auto report = extract_all(llm, dataset, options, store);
  CHECK(report.rationales.size() == 8);
  REQUIRE(report.failures.size() == 2);
  CHECK(report.failures[0].query_id == "q3");
  CHECK(report.failures[1].query_id == "q7");
  CHECK(report.failures[0].message.find("q3") != std::string::npos);
  for (std::size_t i = 1; i < report.rationales.size(); ++i) {
    CHECK(report.rationales[i - 1].query_id < report.rationales[i].query_id);
  }
  CHECK(store.size() == 8);
}

TEST_CASE("extract_all rethrows when every record fails") {
  std::vector<QueryRecord> dataset{record("q1", "Q", {"a"}), record("q2", "R", {"b"})};
  MockGenerator llm;  // no canned answers
  RationaleStore store;
  try {
    extract_all(llm, dataset, {}, store);
    FAIL("expected provider error");
  } catch (const ProviderError& e) {
    CHECK(e.exit_code() == ExitCode::kProvider);
  }
}
