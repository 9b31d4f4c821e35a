// parbals: command-line front end for the active learning engine.
//
//   parbals run --config exp.json [--out results.jsonl] [--scores scores.csv]
//   parbals run --manifest data/manifest.json --algorithm parbals-epig --m 8 --B 20 --T 10 --seed 1
//   parbals suite --config suite.json [--out-dir runs/]
//   parbals oracle-check --suite parbals-mc|bait|batchbald|all
//   parbals plot runs/*.jsonl --out curves.svg
//   parbals prepare --csv data.csv --label y --out-dir data/ [--one-vs-all 3 | --subpop-shift]
//   parbals prepare --synthetic spec.json --seed 0 --out-dir data/
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "parbals/csv.hpp"
#include "parbals/dataset.hpp"
#include "parbals/error.hpp"
#include "parbals/harness.hpp"
#include "parbals/oracle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  if (!fs::exists(path)) throw parbals::ValidationError("file not found: " + path);
  try {
    return json::parse(parbals::csv::read_file(path));
  } catch (const json::exception& e) {
    throw parbals::ValidationError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// Config fields settable from flags; each maps onto the JSON config key.
struct ConfigFlags {
  std::optional<std::string> manifest, synthetic, algorithm, universe_coupling;
  std::optional<int> T, k, m;
  std::optional<std::size_t> B, initial_labeled, val_subsample, bait_g_subsample;
  std::optional<double> beta, sigma2;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "Scenario manifest (from `prepare`)");
    cmd->add_option("--synthetic", synthetic, "Synthetic scenario spec (JSON file)");
    cmd->add_option("--algorithm", algorithm, "Acquisition algorithm");
    cmd->add_option("--T", T, "Active learning iterations");
    cmd->add_option("--B", B, "Labels acquired per iteration");
    cmd->add_option("--initial-labeled", initial_labeled, "Size of the random initial labeled set");
    cmd->add_option("--k", k, "Posterior samples");
    cmd->add_option("--m", m, "ParBaLS universes");
    cmd->add_option("--beta", beta, "Gumbel temperature for stochastic variants");
    cmd->add_option("--sigma2", sigma2, "Prior variance");
    cmd->add_option("--seed", seed, "Experiment seed");
    cmd->add_option("--val-subsample", val_subsample, "Validation points per EPIG evaluation");
    cmd->add_option("--universe-coupling", universe_coupling, "independent | per_universe_weight");
    cmd->add_option("--bait-g-subsample", bait_g_subsample, "Pool rows used to estimate the BAIT pool Hessian (0 = all)");
  }

  void apply(json& j) const {
    if (manifest) j["manifest"] = fs::absolute(*manifest).string();
    if (synthetic) j["synthetic"] = read_json(*synthetic);
    if (algorithm) j["algorithm"] = *algorithm;
    if (T) j["T"] = *T;
    if (B) j["B"] = *B;
    if (initial_labeled) j["initial_labeled"] = *initial_labeled;
    if (k) j["k"] = *k;
    if (m) j["m"] = *m;
    if (beta) j["beta"] = *beta;
    if (sigma2) j["sigma2"] = *sigma2;
    if (seed) j["seed"] = *seed;
    if (val_subsample) j["val_subsample"] = *val_subsample;
    if (universe_coupling) j["universe_coupling"] = *universe_coupling;
    if (bait_g_subsample) j["bait_g_subsample"] = *bait_g_subsample;
  }
};

int cmd_run(const std::string& config_path, const ConfigFlags& flags, const std::string& out_path,
            const std::string& scores_path, bool timing) {
  json j = json::object();
  fs::path base;
  if (!config_path.empty()) {
    j = read_json(config_path);
    base = fs::path(config_path).parent_path();
  }
  flags.apply(j);
  const auto cfg = parbals::config_from_json(j, base);
  const auto scenario = parbals::build_scenario(cfg);

  parbals::RunOptions opt;
  opt.timing = timing;
  std::ofstream scores;
  if (!scores_path.empty()) {
    scores.open(scores_path, std::ios::binary);
    if (!scores) throw std::runtime_error("cannot write " + scores_path);
    parbals::write_scores_header(scores);
    opt.scores_out = &scores;
  }
  const auto curve = parbals::run_experiment(cfg, scenario, opt);
  write_text(out_path, parbals::to_jsonl(curve, timing));
  return 0;
}

// Suite file: {"repeats": 5, "base": {...}, "configs": [{...}, ...], "names": [...]}.
// Each entry of "configs" is merged over "base".
int cmd_suite(const std::string& config_path, const std::optional<int>& repeats_flag, const std::string& out_dir) {
  const json s = read_json(config_path);
  for (auto it = s.begin(); it != s.end(); ++it) {
    if (it.key() != "repeats" && it.key() != "base" && it.key() != "configs" && it.key() != "names") {
      throw parbals::ValidationError("unknown suite key: " + it.key());
    }
  }
  if (!s.contains("configs") || !s.at("configs").is_array() || s.at("configs").empty()) {
    throw parbals::ValidationError("suite needs a non-empty \"configs\" array");
  }
  const fs::path base_dir = fs::path(config_path).parent_path();
  std::vector<parbals::ExperimentConfig> configs;
  for (const auto& c : s.at("configs")) {
    json merged = s.value("base", json::object());
    merged.update(c);
    configs.push_back(parbals::config_from_json(merged, base_dir));
  }
  const int repeats = repeats_flag ? *repeats_flag : s.value("repeats", 5);
  const auto names = s.value("names", std::vector<std::string>{});
  const auto result = parbals::run_suite(configs, repeats, names);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    for (std::size_t ci = 0; ci < result.curves.size(); ++ci) {
      for (const auto& curve : result.curves[ci]) {
        const std::string label = ci < names.size() ? names[ci] : curve.algorithm;
        write_text((fs::path(out_dir) / (label + "-seed" + std::to_string(curve.seed) + ".jsonl")).string(),
                   parbals::to_jsonl(curve));
      }
    }
  }
  std::cout << parbals::format_suite(result.rows);
  return 0;
}

int cmd_oracle(const std::string& suite) {
  std::vector<std::string> suites = suite == "all" ? parbals::oracle::suite_names() : std::vector<std::string>{suite};
  bool ok = true;
  for (const auto& name : suites) {
    const auto report = parbals::oracle::run_battery(name);
    std::cout << report.format();
    ok = ok && report.passed();
  }
  return ok ? 0 : 2;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out_path, const std::string& title) {
  std::vector<std::string> texts;
  for (const auto& p : inputs) {
    if (!fs::exists(p)) throw parbals::ValidationError("file not found: " + p);
    texts.push_back(parbals::csv::read_file(p));
  }
  const auto series = parbals::curves_from_jsonl(texts);
  if (series.empty()) throw parbals::ValidationError("no iteration records in the inputs");
  write_text(out_path, parbals::render_svg(series, title));
  return 0;
}

struct PrepareArgs {
  std::string csv_path, label, synthetic, out_dir;
  int bins = 10;
  std::optional<std::string> one_vs_all;
  bool subpop = false;
  double pool = 0.6, val = 0.2, test = 0.2;
  std::uint64_t seed = 0;
};

int cmd_prepare(const PrepareArgs& a) {
  if (a.csv_path.empty() == a.synthetic.empty()) throw parbals::ValidationError("prepare needs exactly one of --csv or --synthetic");
  parbals::Scenario sc;
  if (!a.synthetic.empty()) {
    sc = parbals::generate_synthetic(parbals::synthetic_spec_from_json(read_json(a.synthetic)), a.seed);
  } else {
    if (a.label.empty()) throw parbals::ValidationError("--label is required with --csv");
    const auto table = parbals::load_csv(a.csv_path, a.label);
    const auto features = parbals::preprocess(table, a.bins);
    auto [labels, levels] = parbals::encode_labels(table.labels);
    int classes = static_cast<int>(levels.size());
    std::optional<std::vector<bool>> mask;
    if (a.one_vs_all && a.subpop) throw parbals::ValidationError("--one-vs-all and --subpop-shift are exclusive");
    if (a.one_vs_all) {
      const auto pos = std::find(levels.begin(), levels.end(), *a.one_vs_all);
      if (pos == levels.end()) throw parbals::ValidationError("class not found: " + *a.one_vs_all);
      labels = parbals::make_one_vs_all(labels, static_cast<int>(pos - levels.begin()));
      classes = 2;
    } else if (a.subpop) {
      auto shift = parbals::make_subpop_shift(labels);
      labels = shift.labels;
      mask = shift.test_mask;
      classes = 3;
    }
    sc = parbals::make_scenario(features, labels, classes, a.pool, a.val, a.test, a.seed, mask ? &*mask : nullptr);
  }
  parbals::export_scenario(sc, a.out_dir);
  std::cout << (fs::path(a.out_dir) / "manifest.json").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pool-based Bayesian active learning with ParBaLS, EPIG, BALD and BAIT"};
  app.require_subcommand(1);

  std::string config_path, out_path, scores_path, out_dir, suite_name = "all", plot_out, title = "test accuracy";
  bool timing = false;
  ConfigFlags flags;
  std::optional<int> repeats;
  std::vector<std::string> plot_inputs;
  PrepareArgs prep;

  auto* run = app.add_subcommand("run", "Run one experiment and write JSONL results");
  run->add_option("--config", config_path, "Experiment config (JSON)");
  flags.attach(run);
  run->add_option("--out", out_path, "JSONL output path (default stdout)");
  run->add_option("--scores", scores_path, "Dump per-iteration acquisition scores as CSV");
  run->add_flag("--timing", timing, "Include wall_time in iteration records");

  auto* suite = app.add_subcommand("suite", "Multi-seed comparison of several configs");
  suite->add_option("--config", config_path, "Suite file (JSON)")->required();
  suite->add_option("--repeats", repeats, "Seeds per config (overrides the file)");
  suite->add_option("--out-dir", out_dir, "Write each run's JSONL here");

  auto* oracle = app.add_subcommand("oracle-check", "Run brute-force oracle batteries");
  oracle->add_option("--suite", suite_name, "parbals-mc | bait | batchbald | all")
      ->check(CLI::IsMember({"parbals-mc", "bait", "batchbald", "all"}));

  auto* plot = app.add_subcommand("plot", "SVG learning curves from JSONL results");
  plot->add_option("inputs", plot_inputs, "JSONL result files")->required();
  plot->add_option("--out", plot_out, "SVG output path (default stdout)");
  plot->add_option("--title", title, "Chart title");

  auto* prepare = app.add_subcommand("prepare", "Build a scenario manifest from a CSV or a synthetic spec");
  prepare->add_option("--csv", prep.csv_path, "Input CSV");
  prepare->add_option("--label", prep.label, "Label column name");
  prepare->add_option("--synthetic", prep.synthetic, "Synthetic spec (JSON)");
  prepare->add_option("--out-dir", prep.out_dir, "Output directory")->required();
  prepare->add_option("--bins", prep.bins, "Quantile bins for numeric features");
  prepare->add_option("--one-vs-all", prep.one_vs_all, "Collapse to <class> versus rest");
  prepare->add_flag("--subpop-shift", prep.subpop, "Two smallest classes plus a pool-only rest class");
  prepare->add_option("--pool-frac", prep.pool, "Pool fraction");
  prepare->add_option("--val-frac", prep.val, "Validation fraction");
  prepare->add_option("--test-frac", prep.test, "Test fraction");
  prepare->add_option("--seed", prep.seed, "Split or generation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*run) return cmd_run(config_path, flags, out_path, scores_path, timing);
    if (*suite) return cmd_suite(config_path, repeats, out_dir);
    if (*oracle) return cmd_oracle(suite_name);
    if (*plot) return cmd_plot(plot_inputs, plot_out, title);
    if (*prepare) return cmd_prepare(prep);
  } catch (const parbals::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const parbals::FitError& e) {
    std::cerr << "fit failed: " << e.what() << " (gradient norm " << e.grad_norm() << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
