#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "ralign/digest.hpp"
#include "ralign/error.hpp"
#include "ralign/jsonl.hpp"
#include "ralign/pipeline.hpp"
#include "ralign/report.hpp"
#include "ralign/synthetic.hpp"
#include "test_support.hpp"

using namespace ralign;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(RALIGN_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

PipelineConfig small_fixture(const fs::path& dir) {
  PlantedOptions options;
  options.queries = 12;
  options.documents = 60;
  options.seed = 3;
  auto config = write_planted_suite(make_planted_suite(options), dir);
  config.epochs = 2;
  config.learning_rate = 1e-3;
  return config;
}

std::map<std::string, std::string> artifact_digests(const fs::path& run_dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    const auto name = e.path().filename().string();
    // The manifest holds timestamps and config.json holds absolute paths.
    if (name == "manifest.json" || name == "config.json" || name == ".lock") continue;
    out[name] = file_sha256_hex(e.path());
  }
  return out;
}

std::vector<std::string> skipped(const std::vector<StageStatus>& statuses) {
  std::vector<std::string> out;
  for (const auto& s : statuses) {
    if (s.skipped) out.emplace_back(stage_name(s.stage));
  }
  return out;
}

std::vector<std::string> executed(const std::vector<StageStatus>& statuses) {
  std::vector<std::string> out;
  for (const auto& s : statuses) {
    if (!s.skipped) out.emplace_back(stage_name(s.stage));
  }
  return out;
}

}  // namespace

TEST_CASE("stage names round-trip") {
  for (auto s : {Stage::kIngest, Stage::kEmbed, Stage::kRationale, Stage::kRank, Stage::kPairs, Stage::kTrain,
                 Stage::kEvaluate}) {
    CHECK(parse_stage(stage_name(s)) == s);
    CHECK_FALSE(stage_outputs(s).empty());
  }
  CHECK_FALSE(parse_stage("nope").has_value());
}

TEST_CASE("two runs over identical inputs produce identical artifacts") {
  const auto dir = test_support::scratch_dir("pipeline_determinism");
  auto config = small_fixture(dir);
  config.runs_root = (dir / "runs_a").string();
  ProviderSet providers_a(config);
  Run a(config, providers_a);
  a.run_all();

  config.runs_root = (dir / "runs_b").string();
  ProviderSet providers_b(config);
  Run b(config, providers_b);
  b.run_all();

  CHECK(a.dir().filename() == b.dir().filename());
  const auto da = artifact_digests(a.dir());
  CHECK(da == artifact_digests(b.dir()));
  CHECK(da.count("head.json") == 1);
  CHECK(da.count("summary.json") == 1);
  CHECK(a.manifest().stages.size() == 7);
  CHECK(a.manifest().config_digest == config.digest());
  CHECK(a.summary().n == 12);
}

TEST_CASE("resume skips completed stages and recomputes tampered ones") {
  const auto dir = test_support::scratch_dir("pipeline_resume");
  const auto config = small_fixture(dir);
  ProviderSet providers(config);
  {
    Run run(config, providers);
    CHECK(executed(run.run_until(Stage::kPairs)) ==
          std::vector<std::string>{"ingest", "embed", "rationale", "rank", "pairs"});
  }
  {
    Run run(config, providers);
    const auto statuses = run.run_all();
    CHECK(executed(statuses) == std::vector<std::string>{"train", "evaluate"});
    CHECK(skipped(statuses).size() == 5);
  }
  const auto groups_before = read_text_file(run_dir_for(config) / "groups.jsonl");
  {
    Run run(config, providers);
    CHECK(executed(run.run_all()).empty());
  }
  write_text_file(run_dir_for(config) / "groups.jsonl", "{}\n");
  {
    Run run(config, providers);
    const auto statuses = run.run_all();
    CHECK(executed(statuses) == std::vector<std::string>{"pairs"});
    CHECK(read_text_file(run_dir_for(config) / "groups.jsonl") == groups_before);
  }
  fs::remove(run_dir_for(config) / "head.json");
  {
    Run run(config, providers);
    CHECK(executed(run.run_all()) == std::vector<std::string>{"train"});
  }
}

TEST_CASE("a changed config lands in a different run directory") {
  const auto dir = test_support::scratch_dir("pipeline_digest");
  auto config = small_fixture(dir);
  const auto first = run_dir_for(config);
  config.alpha = 0.25;
  CHECK(run_dir_for(config) != first);
  config.alpha = 0.5;
  config.concurrency = 1;
  CHECK(run_dir_for(config) == first);
}

TEST_CASE("one process owns a run directory") {
  const auto dir = test_support::scratch_dir("pipeline_lock");
  const auto config = small_fixture(dir);
  ProviderSet providers(config);
  {
    Run owner(config, providers);
    CHECK_THROWS_WITH_AS(Run(config, providers), doctest::Contains("lock"), Error);
  }
  CHECK_NOTHROW(Run(config, providers));
}

TEST_CASE("pairs with no usable queries fail with the stage named") {
  const auto dir = test_support::scratch_dir("pipeline_nopairs");
  auto config = small_fixture(dir);
  config.k1 = 5;
  config.n_shift = 5;
  ProviderSet providers(config);
  Run run(config, providers);
  CHECK_THROWS_AS(run.run_until(Stage::kPairs), ValidationError);
  CHECK(run.failed_stage() == Stage::kPairs);
  CHECK(run.manifest().stages.count("pairs") == 0);
}

TEST_CASE("report table") {
  EvalSummary base;
  base.n = 50;
  base.em = 0.5;
  base.f1 = 0.6;
  base.recall = 0.5;
  EvalSummary trained = base;
  trained.em = 0.75;
  trained.f1 = 0.6;
  trained.recall = 1.0;
  trained.failed = 3;
  trained.n = 47;

  CHECK(relative_delta(0.5, 0.75) == doctest::Approx(0.5));
  CHECK_FALSE(relative_delta(0.0, 0.75).has_value());

  std::vector<ReportRow> rows{{"base", base}, {"trained", trained}};
  const auto with = render_report(rows, 0);
  CHECK(with.find("dEM%") != std::string::npos);
  CHECK(with.find("+50.0") != std::string::npos);
  CHECK(with.find("+100.0") != std::string::npos);
  CHECK(with.find("failed") != std::string::npos);

  const std::vector<ReportRow> single{{"trained", trained}};
  const auto without = render_report(single);
  CHECK(without.find("dEM%") == std::string::npos);
  CHECK(without.find(" 3 ") != std::string::npos);

  EvalSummary mc;
  mc.n = 4;
  mc.per_category["STEM"] = {2, 0.5};
  mc.per_category["ALL"] = {4, 0.25};
  const std::vector<ReportRow> mc_rows{{"mc", mc}};
  const auto mc_table = render_report(mc_rows);
  CHECK(mc_table.find("STEM") != std::string::npos);
  CHECK(mc_table.find("ALL") != std::string::npos);
  CHECK(mc_table.find("Humanities") == std::string::npos);

  CHECK_THROWS_AS(load_report_row(test_support::scratch_dir("pipeline_empty_run")), ValidationError);
}

TEST_CASE("cli ingest reports the malformed line and skips unchanged input") {
  const auto dir = test_support::scratch_dir("cli_ingest");
  const auto config = small_fixture(dir);
  write_text_file(dir / "config.json", dump_json(config.to_json()) + "\n");

  const auto ok = run_cli("ingest -c " + (dir / "config.json").string());
  CHECK_MESSAGE(ok.code == 0, ok.output);
  const auto again = run_cli("ingest -c " + (dir / "config.json").string());
  CHECK(again.code == 0);
  CHECK(again.output.find("skipped") != std::string::npos);

  std::string lines;
  for (int i = 1; i <= 6; ++i) {
    lines += R"({"id":"q)" + std::to_string(i) + R"(","question":"q?","answers":["a"]})" + "\n";
  }
  lines += "{\"id\": \"q7\", \"question\": \n";
  write_text_file(dir / "broken.jsonl", lines);
  const auto bad = run_cli("ingest -c " + (dir / "config.json").string() + " --dataset " +
                           (dir / "broken.jsonl").string());
  CHECK(bad.code == 1);
  CHECK(bad.output.find("line 7") != std::string::npos);
  CHECK(bad.output.find("stage ingest failed") != std::string::npos);
}

TEST_CASE("cli exit codes and commands") {
  const auto dir = test_support::scratch_dir("cli_commands");
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("pipeline --set alpha=2").code == 1);

  const auto synth = run_cli("synth -o " + (dir / "fx").string() + " --queries 10 --documents 50");
  REQUIRE_MESSAGE(synth.code == 0, synth.output);
  const auto cfg = (dir / "fx" / "config.json").string();

  const auto exported = run_cli("export -c " + cfg + " --set epochs=1 -o " + (dir / "groups.jsonl").string());
  REQUIRE_MESSAGE(exported.code == 0, exported.output);
  CHECK(load_groups(dir / "groups.jsonl").size() >= 1);

  const auto full = run_cli("pipeline -c " + cfg + " --set epochs=1");
  REQUIRE_MESSAGE(full.code == 0, full.output);
  std::string run_dir;
  std::istringstream lines(full.output);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind('/', 0) == 0) run_dir = line;
  }
  CHECK(fs::exists(fs::path(run_dir) / "summary.json"));
  CHECK(full.output.find("\"em\"") != std::string::npos);

  const auto report = run_cli("report " + run_dir);
  CHECK(report.code == 0);
  CHECK(report.output.find("EM") != std::string::npos);
  CHECK(run_cli("report " + (dir / "fx").string()).code == 1);

  // Unreachable HTTP provider: provider exit code after the retry budget.
  setenv("RALIGN_TEST_KEY", "test-key", 1);
  const auto http = run_cli("rationale -c " + cfg +
                            " --set llm_provider=http --set llm_endpoint=http://127.0.0.1:1/v1/chat/completions"
                            " --set max_attempts=2 --set retry_base_ms=1 --set llm_api_key_env=RALIGN_TEST_KEY");
  CHECK_MESSAGE(http.code == 2, http.output);
}
