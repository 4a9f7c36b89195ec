#pragma once

// Exact dense retrieval: every corpus document is embedded once, rows are
// unit-normalized, and queries are scored against all rows (cosine).

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ralign/providers.hpp"
#include "ralign/types.hpp"

namespace ralign {

class CorpusIndex {
 public:
  CorpusIndex() = default;
  /// Rows are normalized on construction. Throws ValidationError on duplicate
  /// ids, ragged dims, or zero rows.
  CorpusIndex(std::vector<std::string> doc_ids, const std::vector<EmbeddingVector>& embeddings,
              std::string encoder_model_id);

  std::size_t size() const noexcept { return doc_ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return doc_ids_.empty(); }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::string& encoder_model_id() const noexcept { return encoder_model_id_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(matrix_).subspan(i * dim_, dim_);
  }
  /// Row for a doc id, empty span if unknown.
  std::span<const double> row(const std::string& doc_id) const noexcept;
  std::span<const double> matrix() const noexcept { return matrix_; }

  /// Writes a header {"dim","encoder_model_id","count"} then one {"id","values"} per doc.
  void save(const std::filesystem::path& path) const;
  static CorpusIndex load(const std::filesystem::path& path);

 private:
  std::vector<std::string> doc_ids_;
  std::vector<double> matrix_;  // size() x dim_, row-major
  std::size_t dim_ = 0;
  std::string encoder_model_id_;
  std::unordered_map<std::string, std::size_t> position_;
};

/// Embeds every document text (in batches) and builds the index.
CorpusIndex index_corpus(std::span<const Document> corpus, Embedder& embedder, std::size_t batch_size = 32);

struct RetrievedSet {
  std::string query_id;
  std::vector<ScoredDoc> docs;  // retrieval_score populated, ranks 1..n
};

/// Top-min(k1, |corpus|) documents by cosine with the unit-normalized query
/// vector; ties broken by ascending doc_id.
RetrievedSet retrieve(const CorpusIndex& index, const std::string& query_id, const EmbeddingVector& query, int k1);

/// Embeds `query_text` with `embedder` and retrieves.
RetrievedSet retrieve(const CorpusIndex& index, const std::string& query_id, const std::string& query_text, int k1,
                      Embedder& embedder);

}  // namespace ralign
