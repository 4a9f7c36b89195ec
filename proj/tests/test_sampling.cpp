#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/sampling.hpp"
#include "test_support.hpp"

using namespace ralign;

namespace {

std::vector<ScoredDoc> ranking(int n, const std::string& prefix = "d") {
  std::vector<ScoredDoc> out;
  for (int i = 0; i < n; ++i) {
    ScoredDoc d;
    d.doc_id = prefix + std::to_string(i + 1);
    d.fused = 1.0 - 0.01 * i;
    d.rank = i + 1;
    out.push_back(d);
  }
  return out;
}

int rank_of(const std::vector<ScoredDoc>& r, const std::string& id) {
  for (const auto& d : r) {
    if (d.doc_id == id) return d.rank;
  }
  return -1;
}

}  // namespace

TEST_CASE("CounterRng depends only on key and counter") {
  CounterRng a(5), b(5), c(6);
  std::vector<std::uint64_t> va, vb, vc;
  for (int i = 0; i < 8; ++i) {
    va.push_back(a.next());
    vb.push_back(b.next());
    vc.push_back(c.next());
  }
  CHECK(va == vb);
  CHECK(va != vc);
}

TEST_CASE("CounterRng uniform stays in range and covers it") {
  CounterRng rng(1);
  std::map<std::uint64_t, int> counts;
  for (int i = 0; i < 7000; ++i) {
    const auto x = rng.uniform(7);
    REQUIRE(x < 7);
    ++counts[x];
  }
  CHECK(counts.size() == 7);
  for (const auto& [_, n] : counts) CHECK(n > 800);
}

TEST_CASE("query_seed is the big-endian sha256 prefix") {
  const auto digest = sha256("42:q7");
  std::uint64_t expected = 0;
  for (int i = 0; i < 8; ++i) expected = expected * 256 + digest[static_cast<std::size_t>(i)];
  CHECK(query_seed(42, "q7") == expected);
  CHECK(query_seed(42, "q7") != query_seed(43, "q7"));
}

TEST_CASE("select_positive takes rank 1") {
  auto r = ranking(3);
  std::swap(r[0].doc_id, r[2].doc_id);  // d3, d2, d1
  CHECK(select_positive(r) == "d3");
  CHECK(select_positive(ranking(1)) == "d1");
  CHECK_THROWS_AS(select_positive(std::vector<ScoredDoc>{}), ValidationError);
}

TEST_CASE("sample_negatives draws distinct ids below the shift") {
  const auto r = ranking(10);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto draw = sample_negatives(r, 3, 6, seed);
    CHECK(draw.doc_ids.size() == 6);
    CHECK_FALSE(draw.underfilled);
    std::set<std::string> unique(draw.doc_ids.begin(), draw.doc_ids.end());
    CHECK(unique.size() == 6);
    for (const auto& id : draw.doc_ids) CHECK(rank_of(r, id) >= 4);
  }
}

TEST_CASE("underfilled pools return exactly the remainder") {
  const auto draw = sample_negatives(ranking(5), 3, 6, 1);
  CHECK(draw.underfilled);
  std::set<std::string> got(draw.doc_ids.begin(), draw.doc_ids.end());
  CHECK(got == std::set<std::string>{"d4", "d5"});

  const auto none = sample_negatives(ranking(3), 3, 6, 1);
  CHECK(none.skip());
}

TEST_CASE("n = 0 still excludes the positive") {
  const auto r = ranking(6);
  const auto draw = sample_negatives(r, 0, 5, 9);
  std::set<std::string> got(draw.doc_ids.begin(), draw.doc_ids.end());
  CHECK(got == std::set<std::string>{"d2", "d3", "d4", "d5", "d6"});
  CHECK(sample_negatives(r, 0, 5, 9).doc_ids == draw.doc_ids);
}

TEST_CASE("every pool element is drawn with equal frequency") {
  const auto r = ranking(12);
  std::map<std::string, int> counts;
  for (std::uint64_t seed = 0; seed < 3000; ++seed) {
    for (const auto& id : sample_negatives(r, 3, 3, query_seed(seed, "q")).doc_ids) ++counts[id];
  }
  // 9 eligible docs, 3 draws each trial: expected 1000 per doc.
  CHECK(counts.size() == 9);
  for (const auto& [_, n] : counts) CHECK(std::abs(n - 1000) < 150);
}

TEST_CASE("invalid sampling parameters") {
  CHECK_THROWS_AS(sample_negatives(ranking(5), -1, 2, 0), ValidationError);
  CHECK_THROWS_AS(sample_negatives(ranking(5), 1, 0, 0), ValidationError);
}

TEST_CASE("build_training_groups skips and reports") {
  std::vector<QueryRecord> dataset(3);
  for (int i = 0; i < 3; ++i) {
    dataset[static_cast<std::size_t>(i)].id = "q" + std::to_string(i);
    dataset[static_cast<std::size_t>(i)].question = "question " + std::to_string(i);
    dataset[static_cast<std::size_t>(i)].answers = {"a"};
  }
  std::map<std::string, std::vector<ScoredDoc>> rankings{{"q0", ranking(20)}, {"q1", ranking(3)}};
  PipelineConfig config;
  const auto built = build_training_groups(dataset, rankings, config);
  REQUIRE(built.groups.size() == 1);
  CHECK(built.groups[0].query_id == "q0");
  CHECK(built.groups[0].pos_doc_id == "d1");
  CHECK(built.groups[0].neg_doc_ids.size() == 6);
  CHECK(built.groups[0].seed == query_seed(0, "q0"));
  REQUIRE(built.skipped.size() == 2);
  CHECK(built.skipped[0].query_id == "q1");
  CHECK(built.skipped[1].query_id == "q2");
}

TEST_CASE("a query's draw does not depend on the other queries") {
  std::vector<QueryRecord> one(1), two(2);
  one[0].id = two[1].id = "target";
  two[0].id = "other";
  for (auto* r : {&one[0], &two[0], &two[1]}) {
    r->question = "x";
    r->answers = {"a"};
  }
  std::map<std::string, std::vector<ScoredDoc>> rankings{{"target", ranking(20)}, {"other", ranking(20)}};
  PipelineConfig config;
  config.seed = 17;
  CHECK(build_training_groups(one, rankings, config).groups[0] ==
        build_training_groups(two, rankings, config).groups[1]);
}

TEST_CASE("group records round-trip and export is byte-stable") {
  TrainingGroup g{"q1", "Who?", "d1", {"d4", "d7"}, 99};
  auto text = [](const std::string& id) { return "text of " + id; };
  const Json j = group_to_json(g, text);
  CHECK(j.at("pos").at("text") == "text of d1");
  CHECK(j.at("negs").size() == 2);
  CHECK(group_from_json(j) == g);

  const auto dir = test_support::scratch_dir("sampling_export");
  std::vector<TrainingGroup> groups{g, {"q2", "When?", "d2", {"d3"}, 5}, {"q3", "Why?", "d9", {"d1", "d2"}, 6}};
  export_groups(groups, text, dir / "a.jsonl");
  export_groups(groups, text, dir / "b.jsonl");
  CHECK(read_jsonl(dir / "a.jsonl").size() == 3);
  CHECK(load_groups(dir / "a.jsonl") == groups);
  CHECK(file_sha256_hex(dir / "a.jsonl") == file_sha256_hex(dir / "b.jsonl"));
  CHECK_THROWS_WITH(export_groups({}, text, dir / "c.jsonl"), "nothing to export");
}
