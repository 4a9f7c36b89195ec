#include "ralign/sampling.hpp"

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"

namespace ralign {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t CounterRng::next() noexcept {
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_) ^ (c * kGolden + kGolden));
}

std::uint64_t CounterRng::uniform(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift with rejection.
  unsigned __int128 prod = static_cast<unsigned __int128>(next()) * bound;
  auto low = static_cast<std::uint64_t>(prod);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      prod = static_cast<unsigned __int128>(next()) * bound;
      low = static_cast<std::uint64_t>(prod);
    }
  }
  return static_cast<std::uint64_t>(prod >> 64);
}

std::uint64_t query_seed(std::uint64_t global_seed, const std::string& query_id) {
  const auto digest = sha256(std::to_string(global_seed) + ":" + query_id);
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out = (out << 8) | digest[static_cast<std::size_t>(i)];
  return out;
}

std::string select_positive(std::span<const ScoredDoc> ranked) {
  if (ranked.empty()) throw ValidationError("select_positive: empty ranking");
  return ranked.front().doc_id;
}

NegativeDraw sample_negatives(std::span<const ScoredDoc> ranked, int n_shift, int m, std::uint64_t seed) {
  if (n_shift < 0) throw ValidationError("sample_negatives: n_shift must be non-negative");
  if (m < 1) throw ValidationError("sample_negatives: m must be positive");
  NegativeDraw draw;
  if (ranked.empty()) return draw;
  const std::string& positive = ranked.front().doc_id;
  std::vector<std::string> pool;
  for (const auto& d : ranked) {
    if (d.rank > n_shift && d.doc_id != positive) pool.push_back(d.doc_id);
  }
  const auto want = static_cast<std::size_t>(m);
  draw.underfilled = pool.size() < want;
  const auto take = std::min(want, pool.size());
  // Partial Fisher-Yates: slot i receives a uniform pick from pool[i..].
  CounterRng rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform(pool.size() - i));
    std::swap(pool[i], pool[j]);
    draw.doc_ids.push_back(pool[i]);
  }
  return draw;
}

GroupBuildResult build_training_groups(const std::vector<QueryRecord>& dataset,
                                       const std::map<std::string, std::vector<ScoredDoc>>& rankings,
                                       const PipelineConfig& config) {
  GroupBuildResult result;
  for (const auto& record : dataset) {
    auto it = rankings.find(record.id);
    if (it == rankings.end() || it->second.empty()) {
      result.skipped.push_back({record.id, "no ranking"});
      continue;
    }
    const auto seed = query_seed(config.seed, record.id);
    auto draw = sample_negatives(it->second, config.n_shift, config.m_negatives, seed);
    if (draw.skip()) {
      result.skipped.push_back({record.id, "empty negative pool"});
      continue;
    }
    if (draw.underfilled) result.underfilled.push_back(record.id);
    result.groups.push_back(
        TrainingGroup{record.id, record.question, select_positive(it->second), std::move(draw.doc_ids), seed});
  }
  return result;
}

Json group_to_json(const TrainingGroup& group, const std::function<std::string(const std::string&)>& doc_text) {
  Json negs = Json::array();
  for (const auto& id : group.neg_doc_ids) negs.push_back({{"doc_id", id}, {"text", doc_text(id)}});
  return Json{{"query_id", group.query_id},
              {"question", group.question},
              {"pos", {{"doc_id", group.pos_doc_id}, {"text", doc_text(group.pos_doc_id)}}},
              {"negs", std::move(negs)},
              {"seed", group.seed}};
}

TrainingGroup group_from_json(const Json& j) {
  try {
    TrainingGroup g;
    g.query_id = j.at("query_id").get<std::string>();
    g.question = j.at("question").get<std::string>();
    g.pos_doc_id = j.at("pos").at("doc_id").get<std::string>();
    for (const auto& n : j.at("negs")) g.neg_doc_ids.push_back(n.at("doc_id").get<std::string>());
    g.seed = j.at("seed").get<std::uint64_t>();
    return g;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("training group: ") + e.what());
  }
}

void export_groups(const std::vector<TrainingGroup>& groups,
                   const std::function<std::string(const std::string&)>& doc_text,
                   const std::filesystem::path& path) {
  if (groups.empty()) throw Error("nothing to export");
  std::vector<Json> lines;
  lines.reserve(groups.size());
  for (const auto& g : groups) lines.push_back(group_to_json(g, doc_text));
  write_jsonl(path, lines);
}

std::vector<TrainingGroup> load_groups(const std::filesystem::path& path) {
  std::vector<TrainingGroup> out;
  for_each_jsonl(path, [&](JsonLine&& jl) { out.push_back(group_from_json(jl.value)); });
  return out;
}

}  // namespace ralign
