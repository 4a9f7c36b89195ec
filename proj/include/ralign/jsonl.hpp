#pragma once

// Line-delimited JSON files: one object per line, blank lines ignored.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ralign/types.hpp"

namespace ralign {

struct JsonLine {
  std::size_t line = 0;  // 1-based
  Json value;
};

/// Parses every non-blank line. Throws ValidationError naming the first
/// malformed line ("line 7: ...").
std::vector<JsonLine> read_jsonl(const std::filesystem::path& path);

/// Streams records to `sink`; same error contract as read_jsonl.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(JsonLine&&)>& sink);

/// Serializes one value per line. Writes to a sibling temp file and renames,
/// so readers never observe a partial file.
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& values);

/// Whole-file text helpers with the same atomic-replace behaviour.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

/// Compact, key-sorted, deterministic serialization used for every artifact.
std::string dump_json(const Json& value);

std::vector<QueryRecord> load_dataset(const std::filesystem::path& path);
std::vector<Document> load_corpus(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<QueryRecord>& records);
void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs);

}  // namespace ralign
