#include "ralign/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/rationale.hpp"
#include "ralign/sampling.hpp"

namespace ralign {
namespace {

constexpr const char* kFillerWords[] = {"ledger", "archive", "memo",   "note",    "record", "index",
                                        "catalog", "survey", "bulletin", "digest", "folio",  "register"};

std::string padded(const char* prefix, int i, int width = 3) {
  std::ostringstream out;
  out << prefix << std::setw(width) << std::setfill('0') << i;
  return out.str();
}

template <typename T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform(i))]);
}

double unit_double(CounterRng& rng) { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; }

double normal(CounterRng& rng) {
  double u = unit_double(rng);
  while (u <= 0.0) u = unit_double(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * unit_double(rng));
}

std::vector<double> random_vector(std::size_t dim, CounterRng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return v;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (double& x : v) x /= n;
}

}  // namespace

PlantedSuite make_planted_suite(const PlantedOptions& options) {
  if (options.queries < 1) throw ValidationError("planted suite: queries must be positive");
  if (options.hard_fraction < 0.0 || options.hard_fraction > 1.0) {
    throw ValidationError("planted suite: hard_fraction outside [0,1]");
  }
  const int hard = static_cast<int>(std::lround(options.hard_fraction * options.queries));
  const int planted = options.queries + hard * options.distractors;
  if (planted > options.documents) {
    throw ValidationError("planted suite: " + std::to_string(planted) + " planted docs exceed budget " +
                          std::to_string(options.documents));
  }

  CounterRng rng(query_seed(options.seed, "planted-suite"));
  std::vector<int> query_order(static_cast<std::size_t>(options.queries));
  std::iota(query_order.begin(), query_order.end(), 0);
  shuffle(query_order, rng);
  std::vector<bool> is_hard(query_order.size(), false);
  for (int i = 0; i < hard; ++i) is_hard[static_cast<std::size_t>(query_order[static_cast<std::size_t>(i)])] = true;

  struct Draft {
    std::string text;
    int owner = -1;  // query index for supportive docs
  };
  std::vector<Draft> drafts;
  PlantedSuite suite;
  for (int q = 0; q < options.queries; ++q) {
    const std::string tag = "q" + std::to_string(q);
    const std::string topic = tag + "w0 " + tag + "w1 " + tag + "w2 " + tag + "w3";
    const std::string clues = tag + "ca " + tag + "cb " + tag + "cc";
    const std::string answer = "ans" + std::to_string(q);

    QueryRecord record;
    record.id = padded("q", q);
    record.question = "which value matches " + topic;
    record.answers = {answer};
    suite.dataset.push_back(record);
    if (is_hard[static_cast<std::size_t>(q)]) suite.hard_query_ids.push_back(record.id);

    const std::string rationale = "the clues " + clues + " point to " + answer;
    suite.rationales.push_back({sha256_hex(build_rationale_prompt(record.question, answer)), rationale});

    drafts.push_back({tag + "w0 " + tag + "w1 supporting evidence " + clues + " so the answer is " + answer, q});
    if (is_hard[static_cast<std::size_t>(q)]) {
      for (int j = 0; j < options.distractors; ++j) {
        // Alternate full and three-token topic overlap; both exceed the supportive doc's two.
        std::string overlap = j % 2 == 0 ? topic : tag + "w0 " + tag + "w1 " + tag + "w" + std::to_string(2 + j % 2);
        drafts.push_back({"archive entry " + overlap + " " + tag + "x" + std::to_string(j), -1});
      }
    }
  }
  for (int f = 0; static_cast<int>(drafts.size()) < options.documents; ++f) {
    std::string text;
    for (int w = 0; w < 6; ++w) {
      text += kFillerWords[rng.uniform(std::size(kFillerWords))];
      text += ' ';
    }
    drafts.push_back({text + "filler" + std::to_string(f), -1});
  }

  shuffle(drafts, rng);
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    Document doc{padded("d", static_cast<int>(i)), std::nullopt, drafts[i].text};
    if (drafts[i].owner >= 0) suite.dataset[static_cast<std::size_t>(drafts[i].owner)].support_doc_ids = {doc.id};
    suite.corpus.push_back(std::move(doc));
  }
  return suite;
}

PipelineConfig write_planted_suite(const PlantedSuite& suite, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto root = std::filesystem::absolute(dir);
  save_dataset(root / "dataset.jsonl", suite.dataset);
  save_corpus(root / "corpus.jsonl", suite.corpus);
  std::vector<Json> canned;
  for (const auto& c : suite.rationales) canned.push_back({{"prompt_hash", c.prompt_hash}, {"text", c.text}});
  write_jsonl(root / "canned.jsonl", canned);

  PipelineConfig config;
  config.dataset_path = (root / "dataset.jsonl").string();
  config.corpus_path = (root / "corpus.jsonl").string();
  config.mock_canned_path = (root / "canned.jsonl").string();
  config.runs_root = (root / "runs").string();
  config.cache_dir = (root / "cache").string();
  config.mock_generator = "marker";
  config.embed_dim = 512;
  return config;
}

SeparableSuite make_separable_suite(int groups, std::size_t dim, int negatives, std::uint64_t seed) {
  if (groups < 1 || negatives < 1) throw ValidationError("separable suite: groups and negatives must be positive");
  if (dim < static_cast<std::size_t>(negatives) + 1) throw ValidationError("separable suite: dim too small");
  SeparableSuite suite;
  for (int g = 0; g < groups; ++g) {
    const std::string qid = padded("s", g);
    CounterRng rng(query_seed(seed, qid));
    // Gram-Schmidt on random draws: q first, then negatives orthogonal to q
    // and to each other.
    std::vector<std::vector<double>> basis;
    while (basis.size() < static_cast<std::size_t>(negatives) + 1) {
      auto v = random_vector(dim, rng);
      for (const auto& b : basis) {
        const double p = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
        for (std::size_t k = 0; k < dim; ++k) v[k] -= p * b[k];
      }
      const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (n < 1e-6) continue;
      normalize(v);
      basis.push_back(std::move(v));
    }
    TrainingGroup group;
    group.query_id = qid;
    group.question = qid;
    group.pos_doc_id = qid + "-pos";
    group.seed = query_seed(seed, qid);
    suite.query_vecs.emplace(qid, EmbeddingVector(basis[0]));
    std::vector<double> pos = basis[0];
    const double scale = 0.5 + unit_double(rng);
    for (double& x : pos) x *= scale;
    suite.doc_vecs.emplace(group.pos_doc_id, EmbeddingVector(std::move(pos)));
    for (int j = 0; j < negatives; ++j) {
      std::string id = qid + "-neg" + std::to_string(j);
      suite.doc_vecs.emplace(id, EmbeddingVector(basis[static_cast<std::size_t>(j) + 1]));
      group.neg_doc_ids.push_back(std::move(id));
    }
    suite.groups.push_back(std::move(group));
  }
  return suite;
}

}  // namespace ralign
