#include "ralign/report.hpp"

#include <iomanip>
#include <set>
#include <sstream>
#include <vector>

#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"

namespace ralign {
namespace {

constexpr const char* kCategoryOrder[] = {"Humanities", "Social", "STEM", "Other", "ALL"};

std::string fixed(double v, int precision) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

std::string percent_delta(std::optional<double> d) {
  if (!d) return "n/a";
  std::ostringstream out;
  out << std::showpos << std::fixed << std::setprecision(2) << *d * 100.0 << "%";
  return out.str();
}

}  // namespace

ReportRow load_report_row(const std::filesystem::path& run_dir) {
  const auto summary_path = run_dir / "summary.json";
  if (!std::filesystem::exists(summary_path)) {
    throw ValidationError(run_dir.string() + ": no summary.json (run the evaluate stage first)");
  }
  Json j = Json::parse(read_text_file(summary_path), nullptr, false);
  if (j.is_discarded()) throw ValidationError(summary_path.string() + ": malformed JSON");
  ReportRow row{run_dir.filename().string(), EvalSummary::from_json(j)};
  if (row.label.size() > 8) row.label.resize(8);
  const auto config_path = run_dir / "config.json";
  if (std::filesystem::exists(config_path)) {
    Json c = Json::parse(read_text_file(config_path), nullptr, false);
    if (!c.is_discarded() && c.is_object()) {
      if (c.value("eval_reranker", std::string("trained")) == "base") {
        row.label += " base";
      } else if (auto it = c.find("alpha"); it != c.end() && it->is_number()) {
        row.label += " alpha=" + fixed(it->get<double>(), 2);
      }
    }
  }
  return row;
}

std::optional<double> relative_delta(double base, double value) {
  if (base == 0.0) return std::nullopt;
  return (value - base) / base;
}

std::string render_report(std::span<const ReportRow> rows, std::optional<std::size_t> baseline) {
  if (baseline && *baseline >= rows.size()) throw ValidationError("report: baseline index out of range");
  const bool with_delta = baseline && rows.size() > 1;
  bool with_recall = false;
  std::set<std::string> categories;
  for (const auto& r : rows) {
    with_recall = with_recall || r.summary.recall.has_value();
    for (const auto& [name, _] : r.summary.per_category) categories.insert(name);
  }
  std::vector<std::string> category_cols;
  for (const char* c : kCategoryOrder) {
    if (categories.erase(c)) category_cols.push_back(c);
  }
  category_cols.insert(category_cols.begin(), categories.begin(), categories.end());

  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"run", "n", "failed", "EM", "F1"};
  if (with_recall) header.push_back("recall");
  for (const auto& c : category_cols) header.push_back(c);
  if (with_delta) {
    header.push_back("dEM%");
    header.push_back("dF1%");
    if (with_recall) header.push_back("drecall%");
  }
  table.push_back(header);

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i].summary;
    std::vector<std::string> line{rows[i].label + (with_delta && i == *baseline ? " *" : ""), std::to_string(s.n),
                                  std::to_string(s.failed), fixed(s.em, 4), fixed(s.f1, 4)};
    if (with_recall) line.push_back(s.recall ? fixed(*s.recall, 4) : "-");
    for (const auto& c : category_cols) {
      auto it = s.per_category.find(c);
      line.push_back(it == s.per_category.end() ? "-" : fixed(it->second.em, 4));
    }
    if (with_delta) {
      const auto& b = rows[*baseline].summary;
      line.push_back(percent_delta(relative_delta(b.em, s.em)));
      line.push_back(percent_delta(relative_delta(b.f1, s.f1)));
      if (with_recall) {
        line.push_back(b.recall && s.recall ? percent_delta(relative_delta(*b.recall, *s.recall)) : "n/a");
      }
    }
    table.push_back(std::move(line));
  }

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out << "  ";
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(widths[c])) << line[c];
      } else {
        out << std::right << std::setw(static_cast<int>(widths[c])) << line[c];
      }
    }
    out << '\n';
  }
  if (with_delta) out << "* baseline; d% = (run - baseline) / baseline\n";
  return out.str();
}

}  // namespace ralign
