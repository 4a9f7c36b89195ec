#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "ralign/evaluation.hpp"

namespace ralign {

struct ReportRow {
  std::string label;
  EvalSummary summary;
};

/// Reads summary.json (and config.json for the label) from a run directory.
/// Throws ValidationError when the summary is missing.
ReportRow load_report_row(const std::filesystem::path& run_dir);

/// Relative change (new - base) / base; nullopt when base is 0.
std::optional<double> relative_delta(double base, double value);

/// Fixed-width table: run, n, failed, EM, F1, recall when known, per-category
/// EM for multi-choice runs, and delta-% columns against `baseline` when set.
std::string render_report(std::span<const ReportRow> rows, std::optional<std::size_t> baseline = std::nullopt);

}  // namespace ralign
