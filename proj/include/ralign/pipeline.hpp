#pragma once

// Stage runner. A run lives in runs_root/<config digest>/ and records every
// completed stage in manifest.json with digests of what it read and wrote.
// A stage is skipped when both still match; anything else recomputes it.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ralign/config.hpp"
#include "ralign/evaluation.hpp"
#include "ralign/providers.hpp"

namespace ralign {

enum class Stage { kIngest, kEmbed, kRationale, kRank, kPairs, kTrain, kEvaluate };

const char* stage_name(Stage stage) noexcept;
std::optional<Stage> parse_stage(std::string_view name) noexcept;
/// Artifact file names of a stage, relative to the run directory.
std::vector<std::string> stage_outputs(Stage stage);

/// Providers built from a config: mock or HTTP clients behind on-disk caches
/// in config.cache_dir (in memory when empty).
class ProviderSet {
 public:
  explicit ProviderSet(const PipelineConfig& config);
  ~ProviderSet();

  Embedder& embedder();
  TextGenerator& rationale_llm();
  TextGenerator& generator();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StageRecord {
  std::string input_digest;
  std::string output_digest;
  std::string completed_at;
};

struct Manifest {
  std::string config_digest;
  std::map<std::string, StageRecord> stages;

  Json to_json() const;
  static Manifest from_json(const Json& j);
};

struct StageStatus {
  Stage stage;
  bool skipped = false;
};

/// Holds the run directory lock for its lifetime.
class Run {
 public:
  using Logger = std::function<void(const std::string&)>;

  /// Creates the run directory and takes its lock. Throws Error when another
  /// process holds the lock. `providers` may be shared across runs.
  Run(PipelineConfig config, ProviderSet& providers, Logger log = {});
  ~Run();
  Run(const Run&) = delete;
  Run& operator=(const Run&) = delete;

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const PipelineConfig& config() const noexcept { return config_; }
  const Manifest& manifest() const noexcept { return manifest_; }

  /// Runs every stage up to and including `last`, skipping current ones.
  std::vector<StageStatus> run_until(Stage last);
  std::vector<StageStatus> run_all() { return run_until(Stage::kEvaluate); }

  /// Stage that threw during the last run_until, if any.
  std::optional<Stage> failed_stage() const noexcept { return failed_; }

  /// Summary of a finished evaluate stage.
  EvalSummary summary() const;

 private:
  std::string input_digest(Stage stage) const;
  std::string output_digest(Stage stage) const;
  bool is_current(Stage stage, const std::string& input) const;
  void execute(Stage stage);
  void record(Stage stage, const std::string& input);

  void do_ingest();
  void do_embed();
  void do_rationale();
  void do_rank();
  void do_pairs();
  void do_train();
  void do_evaluate();

  PipelineConfig config_;
  ProviderSet& providers_;
  Logger log_;
  std::filesystem::path dir_;
  std::filesystem::path lock_path_;
  Manifest manifest_;
  std::optional<Stage> failed_;
};

/// runs_root/<config digest>.
std::filesystem::path run_dir_for(const PipelineConfig& config);

struct SweepResult {
  std::filesystem::path base_run;
  std::vector<std::pair<double, std::filesystem::path>> runs;  // (alpha, run dir)
  std::string table;
};

/// One base-reranker run plus one trained run per alpha, then the comparison
/// table with the base run as baseline.
SweepResult run_sweep(const PipelineConfig& config, const std::vector<double>& alphas, ProviderSet& providers,
                      Run::Logger log = {});

}  // namespace ralign
