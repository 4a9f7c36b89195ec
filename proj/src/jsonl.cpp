#include "ralign/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "ralign/error.hpp"

namespace ralign {
namespace {

bool blank_line(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

template <typename T>
std::vector<T> load_records(const std::filesystem::path& path) {
  std::vector<T> out;
  for_each_jsonl(path, [&](JsonLine&& jl) {
    try {
      out.push_back(jl.value.get<T>());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(jl.line) + ": " + e.what());
    }
  });
  return out;
}

template <typename T>
void save_records(const std::filesystem::path& path, const std::vector<T>& records) {
  std::vector<Json> values;
  values.reserve(records.size());
  for (const auto& r : records) values.emplace_back(r);
  write_jsonl(path, values);
}

}  // namespace

void for_each_jsonl(const std::filesystem::path& path, const std::function<void(JsonLine&&)>& sink) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_line(line)) continue;
    Json value = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) {
      throw ValidationError(path.string() + ": line " + std::to_string(lineno) + ": malformed JSON");
    }
    sink(JsonLine{lineno, std::move(value)});
  }
}

std::vector<JsonLine> read_jsonl(const std::filesystem::path& path) {
  std::vector<JsonLine> out;
  for_each_jsonl(path, [&](JsonLine&& jl) { out.push_back(std::move(jl)); });
  return out;
}

std::string dump_json(const Json& value) {
  return value.dump(-1, ' ', /*ensure_ascii=*/false, Json::error_handler_t::strict);
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& values) {
  std::string body;
  for (const auto& v : values) {
    body += dump_json(v);
    body += '\n';
  }
  write_text_file(path, body);
}

std::vector<QueryRecord> load_dataset(const std::filesystem::path& path) {
  return load_records<QueryRecord>(path);
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  return load_records<Document>(path);
}

void save_dataset(const std::filesystem::path& path, const std::vector<QueryRecord>& records) {
  save_records(path, records);
}

void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs) {
  save_records(path, docs);
}

}  // namespace ralign
