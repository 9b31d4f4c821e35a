#pragma once

// Experiment runner: the pool-based active learning loop over a scenario,
// evaluation, multi-seed suites, JSONL results and SVG learning curves.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "parbals/acquisition.hpp"
#include "parbals/bait.hpp"
#include "parbals/bayes_linear.hpp"
#include "parbals/dataset.hpp"
#include "parbals/error.hpp"
#include "parbals/parallel.hpp"
#include "parbals/parbals.hpp"
#include "parbals/rng.hpp"

namespace parbals {

enum class Algorithm {
  random,
  confidence,
  bald,
  epig,
  power_bald,
  power_epig,
  softmax_bald,
  softmax_epig,
  softrank_bald,
  softrank_epig,
  batchbald,
  bait,
  parbals_epig,
  parbals_map_epig,
};

inline const std::vector<std::pair<Algorithm, std::string>>& algorithm_names() {
  static const std::vector<std::pair<Algorithm, std::string>> names = {
      {Algorithm::random, "random"},
      {Algorithm::confidence, "confidence"},
      {Algorithm::bald, "bald"},
      {Algorithm::epig, "epig"},
      {Algorithm::power_bald, "power-bald"},
      {Algorithm::power_epig, "power-epig"},
      {Algorithm::softmax_bald, "softmax-bald"},
      {Algorithm::softmax_epig, "softmax-epig"},
      {Algorithm::softrank_bald, "softrank-bald"},
      {Algorithm::softrank_epig, "softrank-epig"},
      {Algorithm::batchbald, "batchbald"},
      {Algorithm::bait, "bait"},
      {Algorithm::parbals_epig, "parbals-epig"},
      {Algorithm::parbals_map_epig, "parbals-map-epig"},
  };
  return names;
}

inline std::string to_string(Algorithm a) {
  for (const auto& [alg, name] : algorithm_names())
    if (alg == a) return name;
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (const auto& [alg, name] : algorithm_names())
    if (name == s) return alg;
  throw ValidationError("unknown algorithm: " + s);
}

inline bool is_parbals(Algorithm a) { return a == Algorithm::parbals_epig || a == Algorithm::parbals_map_epig; }

struct ExperimentConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<SyntheticSpec> synthetic;
  Algorithm algorithm = Algorithm::random;
  int T = 10;
  std::size_t B = 10;
  std::size_t initial_labeled = 100;
  int k = 400;
  int m = 16;
  double beta = 1.0;
  double sigma2 = 1.0;
  std::uint64_t seed = 0;
  std::size_t val_subsample = 500;
  UniverseCoupling universe_coupling = UniverseCoupling::independent;
  std::size_t bait_g_subsample = 0;  // 0 = full pool

  void validate() const {
    if (manifest.has_value() == synthetic.has_value()) {
      throw ValidationError("config needs exactly one scenario source: manifest or synthetic");
    }
    if (T < 0) throw ValidationError("T must be >= 0");
    if (B < 1) throw ValidationError("B must be >= 1");
    if (initial_labeled < 1) throw ValidationError("initial_labeled must be >= 1");
    if (k < 1) throw ValidationError("k must be >= 1");
    if (m < 1) throw ValidationError("m must be >= 1");
    if (algorithm == Algorithm::parbals_map_epig && m != 1) throw ValidationError("parbals-map-epig uses m = 1");
    if (!(beta > 0.0)) throw ValidationError("beta must be positive");
    if (!(sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
    if (val_subsample < 1) throw ValidationError("val_subsample must be >= 1");
    if (synthetic) synthetic->validate();
  }
};

namespace detail {

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {"manifest", "synthetic", "algorithm", "T",         "B",
                                             "initial_labeled", "k", "m",         "beta",      "sigma2",
                                             "seed",     "val_subsample", "universe_coupling", "bait_g_subsample"};
  return keys;
}

}  // namespace detail

/// Parses a config object. Unknown keys are rejected; `m` is accepted only for
/// the ParBaLS algorithms. A relative manifest path resolves against `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!detail::config_keys().count(it.key())) throw ValidationError("unknown config key: " + it.key());
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("manifest")) {
      std::filesystem::path p = j.at("manifest").get<std::string>();
      cfg.manifest = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (j.contains("synthetic")) cfg.synthetic = synthetic_spec_from_json(j.at("synthetic"));
    cfg.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    cfg.T = j.value("T", cfg.T);
    cfg.B = j.value("B", cfg.B);
    cfg.initial_labeled = j.value("initial_labeled", cfg.initial_labeled);
    cfg.k = j.value("k", cfg.k);
    if (j.contains("m")) {
      if (!is_parbals(cfg.algorithm)) throw ValidationError("m is only valid for parbals algorithms");
      cfg.m = j.at("m").get<int>();
    }
    if (cfg.algorithm == Algorithm::parbals_map_epig) cfg.m = 1;
    cfg.beta = j.value("beta", cfg.beta);
    cfg.sigma2 = j.value("sigma2", cfg.sigma2);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.val_subsample = j.value("val_subsample", cfg.val_subsample);
    if (j.contains("bait_g_subsample")) {
      if (cfg.algorithm != Algorithm::bait) throw ValidationError("bait_g_subsample is only valid for bait");
      cfg.bait_g_subsample = j.at("bait_g_subsample").get<std::size_t>();
    }
    if (j.contains("universe_coupling")) {
      const auto c = j.at("universe_coupling").get<std::string>();
      if (c == "independent") cfg.universe_coupling = UniverseCoupling::independent;
      else if (c == "per_universe_weight") cfg.universe_coupling = UniverseCoupling::per_universe_weight;
      else throw ValidationError("unknown universe_coupling: " + c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
  double accuracy = 0.0;
  double mean_nll = 0.0;
};

inline constexpr double kNllFloor = 1e-12;

/// Accuracy of the BMA argmax (ties to the lowest class) and mean -ln BMA[y]
/// with probabilities floored at 1e-12.
inline Evaluation evaluate(const Eigen::MatrixXd& bma, const std::vector<int>& labels) {
  if (labels.empty()) throw ValidationError("evaluate: empty test set");
  if (static_cast<std::size_t>(bma.rows()) != labels.size()) throw ValidationError("evaluate: size mismatch");
  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Eigen::Index best = 0;
    bma.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    if (best == labels[i]) ++correct;
    nll -= std::log(std::max(bma(static_cast<Eigen::Index>(i), labels[i]), kNllFloor));
  }
  const double n = static_cast<double>(labels.size());
  return {static_cast<double>(correct) / n, nll / n};
}

inline Evaluation evaluate(const PosteriorEnsemble& e, const Eigen::MatrixXd& X, const std::vector<int>& labels) {
  return evaluate(predict(e, X).bma, labels);
}

// ---------------------------------------------------------------------------
// Learning curves

struct IterationRecord {
  int iteration = 0;
  std::size_t labeled_count = 0;
  double test_accuracy = 0.0;
  double test_mean_nll = 0.0;
  std::vector<std::size_t> selected_ids;
  double wall_time = 0.0;  // seconds spent selecting and refitting
};

struct LearningCurve {
  std::string algorithm;
  std::uint64_t seed = 0;
  int T = 0;
  std::size_t B = 0;
  std::size_t initial_labeled = 0;
  std::vector<IterationRecord> records;
  std::vector<nlohmann::json> traces;       // selection trace records, in order
  std::vector<std::size_t> labeled_ids;     // final labeled set, acquisition order
  WeightPoint final_map;
  int final_fit_iterations = 0;

  const IterationRecord& final_record() const { return records.back(); }
};

struct RunOptions {
  bool timing = false;            // include wall_time in JSONL
  std::ostream* scores_out = nullptr;  // per-iteration score dump (CSV)
};

namespace detail {

inline std::uint64_t fit_seed(std::uint64_t seed, int iteration) {
  return Stream::make(seed, "posterior-fit", iteration).key();
}

struct Selection {
  std::vector<std::size_t> positions;  // into the remaining list
  std::vector<nlohmann::json> traces;
};

inline Selection select_batch(const ExperimentConfig& cfg, int t, const PosteriorEnsemble& ensemble,
                              const LabeledSet& L, const Eigen::MatrixXd& D, const std::vector<std::size_t>& ids,
                              const FeatureMatrix& validation, const RunOptions& opt) {
  const auto B = cfg.B;
  const auto iteration = static_cast<std::uint64_t>(t);
  Selection sel;
  const Prior prior{cfg.sigma2};

  auto dump = [&](const Scores& s) {
    if (opt.scores_out) write_scores_csv(*opt.scores_out, ids, s, iteration);
  };
  auto epig = [&] {
    const auto rows = validation_subsample(validation.rows(), cfg.val_subsample, cfg.seed, iteration);
    const auto tv = predict_tensor(ensemble, select_rows(validation.X, rows));
    return epig_scores(predict_tensor(ensemble, D), tv);
  };
  auto stochastic = [&](const Scores& s, StochasticVariant v) {
    dump(s);
    return select_stochastic(s.values, B, ids, {v, cfg.beta, cfg.seed, iteration, false});
  };

  switch (cfg.algorithm) {
    case Algorithm::random:
      sel.positions = sample_without_replacement(ids.size(), B, Stream::make(cfg.seed, "random", iteration));
      break;
    case Algorithm::confidence: {
      const auto s = confidence_scores(predict(ensemble, D).bma);
      dump(s);
      sel.positions = select_top_b(s, B);
      break;
    }
    case Algorithm::bald: {
      const auto s = bald_scores(predict_tensor(ensemble, D));
      dump(s);
      sel.positions = select_top_b(s, B);
      break;
    }
    case Algorithm::epig: {
      const auto s = epig();
      dump(s);
      sel.positions = select_top_b(s, B);
      break;
    }
    case Algorithm::power_bald: sel.positions = stochastic(bald_scores(predict_tensor(ensemble, D)), StochasticVariant::power); break;
    case Algorithm::softmax_bald: sel.positions = stochastic(bald_scores(predict_tensor(ensemble, D)), StochasticVariant::softmax); break;
    case Algorithm::softrank_bald: sel.positions = stochastic(bald_scores(predict_tensor(ensemble, D)), StochasticVariant::softrank); break;
    case Algorithm::power_epig: sel.positions = stochastic(epig(), StochasticVariant::power); break;
    case Algorithm::softmax_epig: sel.positions = stochastic(epig(), StochasticVariant::softmax); break;
    case Algorithm::softrank_epig: sel.positions = stochastic(epig(), StochasticVariant::softrank); break;
    case Algorithm::batchbald: {
      const auto g = select_batchbald(predict_tensor(ensemble, D), B);
      sel.positions = g.selected;
      for (std::size_t s = 0; s < g.selected.size(); ++s) {
        sel.traces.push_back({{"kind", "trace"}, {"algorithm", "batchbald"}, {"iteration", t}, {"step", s},
                              {"chosen_id", ids[g.selected[s]]}, {"joint_mi", g.gains[s]}});
      }
      break;
    }
    case Algorithm::bait: {
      const auto r = bait_greedy(ensemble.map, L.X, D, B, prior,
                                 BaitOptions{cfg.bait_g_subsample, Stream::make(cfg.seed, "bait", t).key()});
      sel.positions = r.selected;
      for (std::size_t s = 0; s < r.selected.size(); ++s) {
        sel.traces.push_back({{"kind", "trace"}, {"algorithm", "bait"}, {"iteration", t}, {"step", s},
                              {"chosen_id", ids[r.selected[s]]}, {"objective", r.objectives[s]}});
      }
      break;
    }
    case Algorithm::parbals_epig:
    case Algorithm::parbals_map_epig: {
      ParbalsConfig pc;
      pc.m = cfg.m;
      pc.B = B;
      pc.variant = cfg.algorithm == Algorithm::parbals_map_epig ? ParbalsVariant::map : ParbalsVariant::sampled;
      pc.coupling = cfg.universe_coupling;
      pc.val_subsample = cfg.val_subsample;
      pc.seed = cfg.seed;
      pc.iteration = iteration;
      pc.k = cfg.k;
      pc.prior = prior;
      const auto r = parbals_select(ensemble, L, D, validation.X, pc);
      sel.positions = r.selected;
      for (const auto& rec : r.trace) {
        sel.traces.push_back({{"kind", "trace"},
                              {"algorithm", to_string(cfg.algorithm)},
                              {"iteration", rec.iteration},
                              {"step", rec.step},
                              {"chosen_id", ids[rec.chosen]},
                              {"mean_score", rec.mean_score},
                              {"per_universe_scores", rec.per_universe_scores},
                              {"pseudo_labels", rec.pseudo_labels}});
      }
      break;
    }
  }
  return sel;
}

}  // namespace detail

inline Scenario build_scenario(const ExperimentConfig& cfg) {
  if (cfg.manifest) return import_scenario(*cfg.manifest);
  return generate_synthetic(*cfg.synthetic, cfg.seed);
}

/// The active learning loop: random initial labeled set, then T rounds of
/// {select B from the pool, remove them, acquire their labels from the
/// oracle, refit, evaluate}. Deterministic per config.
inline LearningCurve run_experiment(const ExperimentConfig& cfg, const Scenario& sc, const RunOptions& opt = {}) {
  cfg.validate();
  const std::size_t n_pool = sc.pool.rows();
  if (cfg.initial_labeled + static_cast<std::size_t>(cfg.T) * cfg.B > n_pool) {
    throw ValidationError("pool exhausted: initial_labeled + T*B exceeds the pool size " + std::to_string(n_pool));
  }
  const Prior prior{cfg.sigma2};
  const int c = sc.num_classes;
  const int d = static_cast<int>(sc.pool.cols());

  std::vector<std::size_t> initial = sc.initial_labeled_indices;
  if (initial.empty()) {
    initial = sample_without_replacement(n_pool, cfg.initial_labeled, Stream::make(cfg.seed, "initial-labeled"));
  } else if (initial.size() != cfg.initial_labeled) {
    throw ValidationError("scenario lists " + std::to_string(initial.size()) +
                          " initial labeled indices but config asks for " + std::to_string(cfg.initial_labeled));
  }

  LearningCurve curve;
  curve.algorithm = to_string(cfg.algorithm);
  curve.seed = cfg.seed;
  curve.T = cfg.T;
  curve.B = cfg.B;
  curve.initial_labeled = cfg.initial_labeled;

  LabeledSet L(c, d);
  std::vector<bool> in_pool(n_pool, true);
  for (auto i : initial) {
    L.append(sc.pool.X.row(static_cast<Eigen::Index>(i)), sc.oracle.acquire(i));
    in_pool[i] = false;
    curve.labeled_ids.push_back(i);
  }

  auto fit = [&](int t) {
    try {
      return laplace_posterior(L, prior, cfg.k, detail::fit_seed(cfg.seed, t));
    } catch (const FitError& e) {
      throw FitError("iteration " + std::to_string(t) + ": " + e.what(), e.grad_norm());
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(t) + ": " + e.what());
    }
  };

  auto clock = std::chrono::steady_clock::now();
  PosteriorEnsemble model = fit(0);
  auto record = [&](int t, std::vector<std::size_t> selected) {
    const auto ev = evaluate(model, sc.test.X, sc.test_labels);
    const auto now = std::chrono::steady_clock::now();
    IterationRecord r;
    r.iteration = t;
    r.labeled_count = L.size();
    r.test_accuracy = ev.accuracy;
    r.test_mean_nll = ev.mean_nll;
    r.selected_ids = std::move(selected);
    r.wall_time = std::chrono::duration<double>(now - clock).count();
    curve.records.push_back(std::move(r));
    clock = std::chrono::steady_clock::now();
  };
  record(0, {});

  for (int t = 1; t <= cfg.T; ++t) {
    std::vector<std::size_t> remaining;
    for (std::size_t i = 0; i < n_pool; ++i)
      if (in_pool[i]) remaining.push_back(i);
    const Eigen::MatrixXd D = select_rows(sc.pool.X, remaining);
    detail::Selection sel;
    try {
      sel = detail::select_batch(cfg, t, model, L, D, remaining, sc.validation, opt);
    } catch (const FitError& e) {
      throw FitError("iteration " + std::to_string(t) + ": " + e.what(), e.grad_norm());
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(t) + ": " + e.what());
    }
    std::vector<std::size_t> chosen;
    for (auto p : sel.positions) chosen.push_back(remaining[p]);
    for (auto id : chosen) {
      in_pool[id] = false;
      L.append(sc.pool.X.row(static_cast<Eigen::Index>(id)), sc.oracle.acquire(id));
      curve.labeled_ids.push_back(id);
    }
    for (auto& tr : sel.traces) curve.traces.push_back(std::move(tr));
    model = fit(t);
    record(t, std::move(chosen));
  }
  curve.final_map = model.map;
  curve.final_fit_iterations = model.fit_iterations;
  return curve;
}

inline LearningCurve run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  return run_experiment(cfg, build_scenario(cfg), opt);
}

/// JSONL: trace records of iteration t precede the iteration record of t; the
/// last line is the summary.
inline std::string to_jsonl(const LearningCurve& curve, bool include_timing = false) {
  std::ostringstream out;
  std::size_t trace_at = 0;
  for (const auto& r : curve.records) {
    while (trace_at < curve.traces.size() && curve.traces[trace_at].at("iteration").get<int>() <= r.iteration) {
      out << curve.traces[trace_at++].dump() << '\n';
    }
    nlohmann::json j = {{"kind", "iteration"},
                        {"algorithm", curve.algorithm},
                        {"seed", curve.seed},
                        {"iteration", r.iteration},
                        {"labeled_count", r.labeled_count},
                        {"test_accuracy", r.test_accuracy},
                        {"test_mean_nll", r.test_mean_nll},
                        {"selected_ids", r.selected_ids}};
    if (include_timing) j["wall_time"] = r.wall_time;
    out << j.dump() << '\n';
  }
  const auto& last = curve.final_record();
  nlohmann::json summary = {{"kind", "summary"},
                            {"algorithm", curve.algorithm},
                            {"seed", curve.seed},
                            {"T", curve.T},
                            {"B", curve.B},
                            {"initial_labeled", curve.initial_labeled},
                            {"labeled_count", last.labeled_count},
                            {"final_accuracy", last.test_accuracy},
                            {"final_mean_nll", last.test_mean_nll},
                            {"final_model",
                             {{"map_norm", curve.final_map.flat().norm()},
                              {"fit_iterations", curve.final_fit_iterations}}}};
  out << summary.dump() << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Suites

struct SuiteRow {
  std::string name;
  std::vector<double> finals;  // final accuracies, sorted ascending
  double mean = 0.0;
  double two_se = 0.0;
  bool highest = false;
  bool top = false;
};

/// Mean and 2 * sample-std / sqrt(n). Values are sorted first so the result
/// does not depend on seed order.
inline std::pair<double, double> mean_and_two_se(std::vector<double> v) {
  if (v.empty()) throw ValidationError("no values");
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, 2.0 * sd / std::sqrt(static_cast<double>(v.size()))};
}

/// A method is top if its mean is within the +- of the highest-mean method,
/// or the highest mean is within its own +-.
inline void mark_top(std::vector<SuiteRow>& rows) {
  if (rows.empty()) return;
  std::size_t h = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].mean > rows[h].mean) h = i;
  for (auto& r : rows) {
    r.highest = r.mean == rows[h].mean;
    r.top = r.mean >= rows[h].mean - rows[h].two_se || r.mean + r.two_se >= rows[h].mean;
  }
}

inline std::vector<SuiteRow> summarize(const std::vector<std::string>& names,
                                       const std::vector<std::vector<double>>& finals) {
  std::vector<SuiteRow> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    SuiteRow r;
    r.name = names[i];
    r.finals = finals[i];
    std::sort(r.finals.begin(), r.finals.end());
    std::tie(r.mean, r.two_se) = mean_and_two_se(r.finals);
    rows.push_back(std::move(r));
  }
  mark_top(rows);
  return rows;
}

struct SuiteResult {
  std::vector<SuiteRow> rows;
  std::vector<std::vector<LearningCurve>> curves;  // [config][repeat]
};

/// Runs each config with seeds seed, seed+1, ..., seed+repeats-1. Runs are
/// spread over PARBALS_THREADS workers.
inline SuiteResult run_suite(const std::vector<ExperimentConfig>& configs, int repeats,
                             const std::vector<std::string>& names = {}) {
  if (repeats < 2) throw ValidationError("suite needs repeats >= 2 for standard errors");
  SuiteResult res;
  res.curves.assign(configs.size(), std::vector<LearningCurve>(static_cast<std::size_t>(repeats)));
  parallel_for(configs.size() * static_cast<std::size_t>(repeats), [&](std::size_t job) {
    const std::size_t ci = job / static_cast<std::size_t>(repeats);
    const std::size_t r = job % static_cast<std::size_t>(repeats);
    ExperimentConfig cfg = configs[ci];
    cfg.seed += r;
    res.curves[ci][r] = run_experiment(cfg);
  });
  std::vector<std::string> labels;
  std::vector<std::vector<double>> finals;
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    labels.push_back(ci < names.size() ? names[ci] : to_string(configs[ci].algorithm));
    std::vector<double> f;
    for (const auto& c : res.curves[ci]) f.push_back(c.final_record().test_accuracy);
    finals.push_back(std::move(f));
  }
  res.rows = summarize(labels, finals);
  return res;
}

inline std::string format_suite(const std::vector<SuiteRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(20) << "algorithm" << std::right << std::setw(12) << "mean acc" << std::setw(10)
      << "+-2SE" << "  flags\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    out << std::left << std::setw(20) << r.name << std::right << std::setw(12) << 100.0 * r.mean << std::setw(10)
        << 100.0 * r.two_se << "  " << (r.highest ? "highest " : "") << (r.top ? "top" : "") << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Plotting

struct CurveSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> band;  // 2 * SE across seeds
};

/// Groups iteration records of JSONL result files by algorithm.
inline std::vector<CurveSeries> curves_from_jsonl(const std::vector<std::string>& jsonl_texts) {
  std::map<std::string, std::map<std::size_t, std::vector<double>>> acc;
  for (const auto& text : jsonl_texts) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("plot: bad JSONL line: ") + e.what());
      }
      if (j.value("kind", "") != "iteration") continue;
      acc[j.at("algorithm").get<std::string>()][j.at("labeled_count").get<std::size_t>()].push_back(
          j.at("test_accuracy").get<double>());
    }
  }
  std::vector<CurveSeries> out;
  for (auto& [name, points] : acc) {
    CurveSeries s;
    s.name = name;
    for (auto& [x, ys] : points) {
      auto [m, b] = mean_and_two_se(ys);
      s.x.push_back(static_cast<double>(x));
      s.mean.push_back(m);
      s.band.push_back(b);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string render_svg(const std::vector<CurveSeries>& series, const std::string& title = "test accuracy") {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                  "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939", "#843c39", "#7b4173"};
  const double W = 720, H = 440, left = 60, right = 180, top = 30, bottom = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.mean[i] - s.band[i]);
      y1 = std::max(y1, s.mean[i] + s.band[i]);
    }
  if (series.empty() || x0 > x1) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1e-3;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">" << std::setprecision(0) << xv << "</text>\n";
    out << std::setprecision(2) << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << yv << "</text>\n" << std::setprecision(2);
  }
  out << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">labeled examples</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& cs = series[s];
    const char* color = palette[s % (sizeof(palette) / sizeof(palette[0]))];
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < cs.x.size(); ++i) out << px(cs.x[i]) << ',' << py(cs.mean[i] + cs.band[i]) << ' ';
    for (std::size_t i = cs.x.size(); i-- > 0;) out << px(cs.x[i]) << ',' << py(cs.mean[i] - cs.band[i]) << ' ';
    out << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < cs.x.size(); ++i) out << px(cs.x[i]) << ',' << py(cs.mean[i]) << ' ';
    out << "\"/>\n";
    const double ly = top + 16.0 * static_cast<double>(s);
    out << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - right + 36 << "\" y=\"" << ly + 4 << "\">" << cs.name << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace parbals
