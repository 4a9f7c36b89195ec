#include "ralign/retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/simd.hpp"

namespace ralign {

CorpusIndex::CorpusIndex(std::vector<std::string> doc_ids, const std::vector<EmbeddingVector>& embeddings,
                         std::string encoder_model_id)
    : doc_ids_(std::move(doc_ids)), encoder_model_id_(std::move(encoder_model_id)) {
  if (doc_ids_.size() != embeddings.size()) throw ValidationError("index: ids and embeddings differ in length");
  if (doc_ids_.empty()) return;
  dim_ = embeddings.front().dim();
  matrix_.reserve(doc_ids_.size() * dim_);
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    if (embeddings[i].dim() != dim_) throw ValidationError("index: embedding dims differ for " + doc_ids_[i]);
    if (!position_.emplace(doc_ids_[i], i).second) throw ValidationError("index: duplicate doc id " + doc_ids_[i]);
    const auto unit = embeddings[i].normalized();
    matrix_.insert(matrix_.end(), unit.values().begin(), unit.values().end());
  }
}

std::span<const double> CorpusIndex::row(const std::string& doc_id) const noexcept {
  auto it = position_.find(doc_id);
  if (it == position_.end()) return {};
  return row(it->second);
}

void CorpusIndex::save(const std::filesystem::path& path) const {
  std::vector<Json> lines;
  lines.reserve(size() + 1);
  lines.push_back(Json{{"dim", dim_}, {"encoder_model_id", encoder_model_id_}, {"count", size()}});
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = row(i);
    lines.push_back(Json{{"id", doc_ids_[i]}, {"values", std::vector<double>(r.begin(), r.end())}});
  }
  write_jsonl(path, lines);
}

CorpusIndex CorpusIndex::load(const std::filesystem::path& path) {
  auto lines = read_jsonl(path);
  if (lines.empty()) throw ValidationError(path.string() + ": empty index file");
  const Json& header = lines.front().value;
  CorpusIndex index;
  try {
    index.dim_ = header.at("dim").get<std::size_t>();
    index.encoder_model_id_ = header.at("encoder_model_id").get<std::string>();
    const auto count = header.at("count").get<std::size_t>();
    if (count + 1 != lines.size()) throw ValidationError(path.string() + ": count does not match records");
    index.doc_ids_.reserve(count);
    index.matrix_.reserve(count * index.dim_);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const Json& rec = lines[i].value;
      auto id = rec.at("id").get<std::string>();
      auto values = rec.at("values").get<std::vector<double>>();
      if (values.size() != index.dim_) {
        throw ValidationError(path.string() + ": line " + std::to_string(lines[i].line) + ": wrong dim");
      }
      if (!index.position_.emplace(id, index.doc_ids_.size()).second) {
        throw ValidationError(path.string() + ": duplicate id " + id);
      }
      index.doc_ids_.push_back(std::move(id));
      index.matrix_.insert(index.matrix_.end(), values.begin(), values.end());
    }
  } catch (const Json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return index;
}

CorpusIndex index_corpus(std::span<const Document> corpus, Embedder& embedder, std::size_t batch_size) {
  if (corpus.empty()) throw ValidationError("index_corpus: empty corpus");
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<std::string> ids;
  std::vector<EmbeddingVector> vecs;
  ids.reserve(corpus.size());
  vecs.reserve(corpus.size());
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    const auto end = std::min(corpus.size(), start + batch_size);
    std::vector<std::string> texts;
    for (std::size_t i = start; i < end; ++i) {
      texts.push_back(corpus[i].text);
      ids.push_back(corpus[i].id);
    }
    auto batch = embedder.embed(texts);
    for (auto& v : batch) vecs.push_back(std::move(v));
  }
  return CorpusIndex(std::move(ids), vecs, embedder.model_id());
}

RetrievedSet retrieve(const CorpusIndex& index, const std::string& query_id, const EmbeddingVector& query, int k1) {
  if (index.empty()) throw ValidationError("retrieve: empty index");
  if (k1 < 1) throw ValidationError("retrieve: k1 must be positive");
  if (query.dim() != index.dim()) {
    throw ValidationError("retrieve: query dim " + std::to_string(query.dim()) + " != index dim " +
                          std::to_string(index.dim()));
  }
  const auto q = query.normalized();
  std::vector<double> scores(index.size());
  simd::gemv(index.matrix(), index.size(), index.dim(), q.values(), scores);

  const auto& ids = index.doc_ids();
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(k1), order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);

  RetrievedSet out{query_id, {}};
  out.docs.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    ScoredDoc d;
    d.doc_id = ids[order[r]];
    d.retrieval_score = std::clamp(scores[order[r]], -1.0, 1.0);
    d.rank = static_cast<int>(r + 1);
    out.docs.push_back(std::move(d));
  }
  return out;
}

RetrievedSet retrieve(const CorpusIndex& index, const std::string& query_id, const std::string& query_text, int k1,
                      Embedder& embedder) {
  return retrieve(index, query_id, embedder.embed_one(query_text), k1);
}

}  // namespace ralign
