// ralign: stage-based command line for the rationale-alignment pipeline.
//
// Usage:
//   ralign pipeline --config run.json [--set key=value ...]
//   ralign train --config run.json --alpha 0.3
//   ralign report runs/<a> runs/<b> --baseline runs/<a>
//   ralign sweep --config run.json --alphas 0,0.25,0.5,0.75,1
//   ralign synth --out fixture/
//
// Every stage command runs the stages it depends on first; stages whose inputs
// and outputs still match the run manifest are skipped. Precedence for
// settings: flag > --set > config file > default.
//
// Exit codes: 0 success, 1 validation, 2 provider, 3 internal.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ralign/config.hpp"
#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/pipeline.hpp"
#include "ralign/report.hpp"
#include "ralign/synthetic.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::string dataset;
  std::string corpus;
  std::string runs_root;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "JSON config file");
  cmd->add_option("--set", o.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--dataset", o.dataset, "dataset JSONL");
  cmd->add_option("--corpus", o.corpus, "corpus JSONL");
  cmd->add_option("--runs-root", o.runs_root, "directory holding run directories");
  cmd->add_option("--alpha", o.alpha, "fusion weight of the rationale score");
  cmd->add_option("--seed", o.seed, "global seed");
}

ralign::PipelineConfig resolve_config(const CommonOptions& o) {
  std::vector<std::string> overrides = o.sets;
  auto quoted = [](const std::string& s) { return ralign::dump_json(ralign::Json(s)); };
  if (!o.dataset.empty()) overrides.push_back("dataset_path=" + quoted(o.dataset));
  if (!o.corpus.empty()) overrides.push_back("corpus_path=" + quoted(o.corpus));
  if (!o.runs_root.empty()) overrides.push_back("runs_root=" + quoted(o.runs_root));
  if (o.alpha) overrides.push_back("alpha=" + ralign::dump_json(ralign::Json(*o.alpha)));
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  return ralign::load_config(o.config_path, overrides);
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

int run_stage(const CommonOptions& o, ralign::Stage last) {
  const auto config = resolve_config(o);
  ralign::ProviderSet providers(config);
  ralign::Run run(config, providers, log_line);
  try {
    run.run_until(last);
  } catch (const std::exception& e) {
    if (auto s = run.failed_stage()) std::cerr << "error: stage " << ralign::stage_name(*s) << " failed\n";
    throw;
  }
  std::cout << run.dir().string() << '\n';
  if (last == ralign::Stage::kEvaluate) {
    std::cout << ralign::dump_json(run.summary().to_json()) << '\n';
  }
  return 0;
}

std::vector<double> parse_alphas(const std::string& list) {
  std::vector<double> out;
  std::stringstream in(list);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      const double a = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(a);
    } catch (const std::exception&) {
      throw ralign::ValidationError("--alphas: not a number: \"" + item + "\"");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rationale-aligned reranker pipeline"};
  app.require_subcommand(1);

  struct StageCommand {
    const char* name;
    const char* help;
    ralign::Stage last;
  };
  const StageCommand stage_commands[] = {
      {"ingest", "validate dataset and corpus", ralign::Stage::kIngest},
      {"embed-corpus", "embed and index the corpus", ralign::Stage::kEmbed},
      {"rationale", "extract rationales", ralign::Stage::kRationale},
      {"rank", "retrieve and rank by fused score", ralign::Stage::kRank},
      {"pairs", "mine contrastive training groups", ralign::Stage::kPairs},
      {"train", "train the reranker head", ralign::Stage::kTrain},
      {"evaluate", "run RAG evaluation", ralign::Stage::kEvaluate},
      {"pipeline", "run every stage", ralign::Stage::kEvaluate},
  };

  CommonOptions common;
  std::vector<std::pair<CLI::App*, ralign::Stage>> stage_apps;
  for (const auto& sc : stage_commands) {
    auto* cmd = app.add_subcommand(sc.name, sc.help);
    add_common(cmd, common);
    stage_apps.emplace_back(cmd, sc.last);
  }

  auto* export_cmd = app.add_subcommand("export", "write training groups to a file");
  add_common(export_cmd, common);
  std::string export_path;
  export_cmd->add_option("-o,--out", export_path, "output JSONL")->required();

  auto* report_cmd = app.add_subcommand("report", "compare evaluation summaries");
  std::vector<std::string> report_dirs;
  std::string baseline_dir;
  report_cmd->add_option("runs", report_dirs, "run directories")->required();
  report_cmd->add_option("--baseline", baseline_dir, "run directory used for delta columns");

  auto* sweep_cmd = app.add_subcommand("sweep", "base run plus one trained run per alpha");
  add_common(sweep_cmd, common);
  std::string alphas = "0,0.25,0.5,0.75,1";
  sweep_cmd->add_option("--alphas", alphas, "comma-separated alpha values");

  auto* synth_cmd = app.add_subcommand("synth", "write the planted synthetic fixture");
  std::string synth_out;
  ralign::PlantedOptions planted;
  synth_cmd->add_option("-o,--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--queries", planted.queries);
  synth_cmd->add_option("--documents", planted.documents);
  synth_cmd->add_option("--hard-fraction", planted.hard_fraction);
  synth_cmd->add_option("--seed", planted.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ralign::ExitCode::kValidation);
  }

  try {
    for (const auto& [cmd, last] : stage_apps) {
      if (cmd->parsed()) return run_stage(common, last);
    }
    if (export_cmd->parsed()) {
      const auto config = resolve_config(common);
      ralign::ProviderSet providers(config);
      ralign::Run run(config, providers, log_line);
      run.run_until(ralign::Stage::kPairs);
      const auto groups = ralign::load_groups(run.dir() / "groups.jsonl");
      ralign::write_text_file(export_path, ralign::read_text_file(run.dir() / "groups.jsonl"));
      std::cout << groups.size() << " groups written to " << export_path << '\n';
      return 0;
    }
    if (report_cmd->parsed()) {
      std::vector<ralign::ReportRow> rows;
      std::optional<std::size_t> baseline;
      for (const auto& d : report_dirs) {
        if (!baseline_dir.empty() && std::filesystem::equivalent(d, baseline_dir)) baseline = rows.size();
        rows.push_back(ralign::load_report_row(d));
      }
      if (!baseline_dir.empty() && !baseline) {
        baseline = rows.size();
        rows.push_back(ralign::load_report_row(baseline_dir));
      }
      std::cout << ralign::render_report(rows, baseline);
      return 0;
    }
    if (sweep_cmd->parsed()) {
      const auto config = resolve_config(common);
      ralign::ProviderSet providers(config);
      const auto result = ralign::run_sweep(config, parse_alphas(alphas), providers, log_line);
      std::cout << result.table;
      return 0;
    }
    if (synth_cmd->parsed()) {
      const auto suite = ralign::make_planted_suite(planted);
      auto config = ralign::write_planted_suite(suite, synth_out);
      ralign::write_text_file(std::filesystem::path(synth_out) / "config.json",
                              ralign::dump_json(config.to_json()) + "\n");
      std::cout << "wrote " << suite.dataset.size() << " queries, " << suite.corpus.size() << " documents to "
                << synth_out << '\n';
      return 0;
    }
  } catch (const ralign::ValidationError& e) {
    if (e.problems().size() > 1) {
      std::cerr << "error: validation failed:\n";
      for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
    } else {
      std::cerr << "error: " << e.what() << '\n';
    }
    return static_cast<int>(e.exit_code());
  } catch (const ralign::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(ralign::ExitCode::kInternal);
  }
  return static_cast<int>(ralign::ExitCode::kInternal);
}
