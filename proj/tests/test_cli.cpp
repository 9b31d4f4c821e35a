#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir(const std::string& name) {
  auto p = fs::path(PARBALS_TEST_TMP) / ("cli-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Result cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = env + " \"" + std::string(PARBALS_CLI_PATH) + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write_synthetic(const fs::path& dir) {
  const auto p = dir / "synthetic.json";
  std::ofstream(p) << json{{"num_classes", 2}, {"dim", 3},    {"weight_scale", 3.0}, {"weight_seed", 2},
                           {"n_pool", 300},   {"n_val", 40}, {"n_test", 100}}
                          .dump();
  return p;
}

fs::path prepared_manifest(const fs::path& dir) {
  const auto spec = write_synthetic(dir);
  const auto r = cli("prepare --synthetic \"" + spec.string() + "\" --out-dir \"" + (dir / "scenario").string() + "\"", dir);
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "scenario" / "manifest.json";
}

std::vector<json> parse_lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST(Cli, MissingConfigExitsOne) {
  const auto dir = work_dir("missing");
  const auto r = cli("run --config missing.json", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("missing.json"), std::string::npos);
}

TEST(Cli, UnknownFlagPrintsUsageAndExitsOne) {
  const auto dir = work_dir("unknown-flag");
  const auto r = cli("run --no-such-flag 3", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, NoSubcommandExitsOne) {
  const auto dir = work_dir("no-sub");
  EXPECT_EQ(cli("", dir).code, 1);
}

TEST(Cli, InvalidConfigValueExitsOne) {
  const auto dir = work_dir("invalid");
  const auto manifest = prepared_manifest(dir);
  const auto r = cli("run --manifest \"" + manifest.string() + "\" --algorithm epig --m 4", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("m is only valid"), std::string::npos);
}

TEST(Cli, ParbalsRunOnSyntheticManifest) {
  const auto dir = work_dir("run");
  const auto manifest = prepared_manifest(dir);
  const auto out = dir / "result.jsonl";
  const auto r = cli("run --manifest \"" + manifest.string() +
                         "\" --algorithm parbals-epig --m 8 --B 20 --T 10 --seed 1 --initial-labeled 50 --k 30"
                         " --val-subsample 20 --out \"" + out.string() + "\"",
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = parse_lines(slurp(out));
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(lines.back()["kind"], "summary");
  EXPECT_EQ(lines.back()["labeled_count"], 250);
  std::size_t iterations = 0, traces = 0;
  for (const auto& l : lines) {
    iterations += l["kind"] == "iteration";
    traces += l["kind"] == "trace";
  }
  EXPECT_EQ(iterations, 11u);
  EXPECT_EQ(traces, 200u);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto dir = work_dir("config");
  const auto spec = write_synthetic(dir);
  std::ofstream(dir / "cfg.json") << json{{"synthetic", json::parse(slurp(spec))}, {"algorithm", "bald"}, {"T", 2},
                                          {"B", 3},  {"initial_labeled", 5},  {"k", 10}}
                                         .dump();
  const auto r = cli("run --config \"" + (dir / "cfg.json").string() + "\" --T 1 --timing --scores \"" +
                         (dir / "scores.csv").string() + "\"",
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = parse_lines(r.out);
  EXPECT_EQ(lines.back()["T"], 1);
  EXPECT_TRUE(lines.front().contains("wall_time"));
  const auto scores = slurp(dir / "scores.csv");
  EXPECT_EQ(scores.rfind("point_id,score,kind,iteration\n", 0), 0u);
}

TEST(Cli, RunIsByteIdenticalAcrossThreadCounts) {
  const auto dir = work_dir("threads");
  const auto manifest = prepared_manifest(dir);
  const std::string args = "run --manifest \"" + manifest.string() +
                           "\" --algorithm parbals-epig --m 4 --B 5 --T 3 --initial-labeled 20 --k 20 --seed 7";
  const auto a = cli(args, dir, "PARBALS_THREADS=1");
  const auto b = cli(args, dir, "PARBALS_THREADS=4");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST(Cli, OracleCheckBatchBald) {
  const auto dir = work_dir("oracle");
  const auto r = cli("oracle-check --suite batchbald", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS batchbald"), std::string::npos);
}

TEST(Cli, OracleCheckParbalsMcPrintsTable) {
  const auto dir = work_dir("oracle-mc");
  const auto r = cli("oracle-check --suite parbals-mc", dir);
  EXPECT_NE(r.out.find("argmax match"), std::string::npos);
  EXPECT_NE(r.out.find("mean regret"), std::string::npos);
  EXPECT_TRUE(r.code == 0 || r.code == 2);
  EXPECT_EQ(r.code == 0, r.out.find("PASS parbals-mc") != std::string::npos);
}

TEST(Cli, OracleCheckRejectsUnknownSuite) {
  const auto dir = work_dir("oracle-bad");
  EXPECT_EQ(cli("oracle-check --suite nope", dir).code, 1);
}

TEST(Cli, SuiteAndPlot) {
  const auto dir = work_dir("suite");
  const auto spec = write_synthetic(dir);
  std::ofstream(dir / "suite.json") << json{{"repeats", 2},
                                            {"base",
                                             {{"synthetic", json::parse(slurp(spec))},
                                              {"T", 2},
                                              {"B", 4},
                                              {"initial_labeled", 10},
                                              {"k", 10}}},
                                            {"configs", {{{"algorithm", "random"}}, {{"algorithm", "epig"}}}}}
                                           .dump();
  const auto runs = dir / "runs";
  const auto r = cli("suite --config \"" + (dir / "suite.json").string() + "\" --out-dir \"" + runs.string() + "\"", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("+-2SE"), std::string::npos);
  EXPECT_TRUE(fs::exists(runs / "random-seed0.jsonl"));
  EXPECT_TRUE(fs::exists(runs / "epig-seed1.jsonl"));

  const auto svg = dir / "curves.svg";
  const auto p = cli("plot \"" + (runs / "random-seed0.jsonl").string() + "\" \"" + (runs / "random-seed1.jsonl").string() +
                         "\" \"" + (runs / "epig-seed0.jsonl").string() + "\" --out \"" + svg.string() + "\"",
                     dir);
  ASSERT_EQ(p.code, 0) << p.err;
  const auto text = slurp(svg);
  EXPECT_NE(text.find("<svg"), std::string::npos);
  EXPECT_NE(text.find("epig"), std::string::npos);
}

TEST(Cli, PlotMissingInputExitsOne) {
  const auto dir = work_dir("plot-missing");
  EXPECT_EQ(cli("plot nothing.jsonl", dir).code, 1);
}

TEST(Cli, PrepareFromCsvOneVsAll) {
  const auto dir = work_dir("prepare-csv");
  {
    std::ofstream csv(dir / "data.csv");
    csv << "a,b,label\n";
    for (int i = 0; i < 60; ++i) csv << i * 0.5 << ',' << (i % 7) << ',' << (i % 3 == 0 ? "cat" : i % 3 == 1 ? "dog" : "eel") << '\n';
  }
  const auto r = cli("prepare --csv \"" + (dir / "data.csv").string() + "\" --label label --one-vs-all dog --out-dir \"" +
                         (dir / "scen").string() + "\"",
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = json::parse(slurp(dir / "scen" / "manifest.json"));
  EXPECT_EQ(manifest["num_classes"], 2);
  EXPECT_EQ(cli("prepare --out-dir \"" + (dir / "x").string() + "\"", dir).code, 1);
}
