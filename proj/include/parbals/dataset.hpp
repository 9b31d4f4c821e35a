#pragma once

// Tabular ingestion, preprocessing, evaluation scenarios and synthetic
// ground-truth problems.

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "parbals/csv.hpp"
#include "parbals/error.hpp"
#include "parbals/rng.hpp"

namespace parbals {

// ---------------------------------------------------------------------------
// Raw tables

struct Column {
  std::string name;
  bool numeric = true;
  std::vector<double> numbers;      // filled when numeric
  std::vector<std::string> text;    // raw cells, always filled
  std::vector<std::string> levels;  // sorted distinct values when categorical
};

struct RawTable {
  std::vector<Column> columns;  // features only
  std::string label_column;
  std::vector<std::string> labels;

  std::size_t rows() const { return labels.size(); }
  std::size_t features() const { return columns.size(); }
};

namespace detail {

inline std::optional<double> parse_decimal(const std::string& cell) {
  std::size_t b = cell.find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  std::size_t e = cell.find_last_not_of(" \t");
  const char* first = cell.data() + b;
  const char* last = cell.data() + e + 1;
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::general);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

inline bool is_blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

}  // namespace detail

/// Builds a table from parsed CSV. A column is numeric iff every non-empty
/// cell parses as a decimal number; numeric columns reject empty or NaN cells.
inline RawTable table_from_csv(const csv::Document& doc, const std::string& label_column) {
  auto it = std::find(doc.header.begin(), doc.header.end(), label_column);
  if (it == doc.header.end()) throw ValidationError("label column '" + label_column + "' not found in header");
  if (doc.rows.empty()) throw ValidationError("csv: no data rows");
  const std::size_t label_idx = static_cast<std::size_t>(it - doc.header.begin());

  RawTable table;
  table.label_column = label_column;
  for (const auto& row : doc.rows) table.labels.push_back(row[label_idx]);

  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    if (c == label_idx) continue;
    Column col;
    col.name = doc.header[c];
    bool any_value = false;
    for (const auto& row : doc.rows) {
      col.text.push_back(row[c]);
      if (detail::is_blank(row[c])) continue;
      any_value = true;
      if (col.numeric && !detail::parse_decimal(row[c])) col.numeric = false;
    }
    if (!any_value) col.numeric = false;
    if (col.numeric) {
      for (std::size_t r = 0; r < doc.rows.size(); ++r) {
        auto v = detail::parse_decimal(doc.rows[r][c]);
        if (!v || !std::isfinite(*v)) {
          throw ValidationError("csv line " + std::to_string(doc.line_numbers[r]) + ": column '" + col.name +
                                "' has a missing or non-finite value");
        }
        col.numbers.push_back(*v);
      }
    } else {
      std::set<std::string> lv(col.text.begin(), col.text.end());
      col.levels.assign(lv.begin(), lv.end());
    }
    table.columns.push_back(std::move(col));
  }
  return table;
}

inline RawTable load_csv(const std::string& path, const std::string& label_column) {
  return table_from_csv(csv::load(path), label_column);
}

/// Integer label codes. Numeric labels are ordered numerically, others lexicographically.
inline std::pair<std::vector<int>, std::vector<std::string>> encode_labels(const std::vector<std::string>& raw) {
  bool numeric = !raw.empty();
  for (const auto& s : raw) {
    if (!detail::parse_decimal(s)) {
      numeric = false;
      break;
    }
  }
  std::vector<std::string> levels;
  if (numeric) {
    std::map<double, std::string> by_value;
    for (const auto& s : raw) by_value.emplace(*detail::parse_decimal(s), s);
    for (auto& [v, s] : by_value) levels.push_back(s);
  } else {
    std::set<std::string> lv(raw.begin(), raw.end());
    levels.assign(lv.begin(), lv.end());
  }
  std::vector<int> codes;
  codes.reserve(raw.size());
  for (const auto& s : raw) {
    std::size_t code = 0;
    if (numeric) {
      const double v = *detail::parse_decimal(s);
      while (*detail::parse_decimal(levels[code]) != v) ++code;
    } else {
      code = static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), s) - levels.begin());
    }
    codes.push_back(static_cast<int>(code));
  }
  return {codes, levels};
}

// ---------------------------------------------------------------------------
// Preprocessing

struct FeatureMatrix {
  Eigen::MatrixXd X;  // rows are points
  std::vector<std::string> names;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }
};

/// Quantile cut points for `bins` bins. Edge i is the empirical lower
/// i/bins-quantile; duplicates and edges at the maximum are dropped so every
/// bin is occupied.
inline std::vector<double> quantile_edges(std::vector<double> values, int bins) {
  if (bins < 2) throw ValidationError("bins must be >= 2");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::vector<double> edges;
  for (int i = 1; i < bins; ++i) {
    auto rank = static_cast<std::size_t>(std::ceil(static_cast<double>(i) * static_cast<double>(n) / bins));
    rank = std::clamp<std::size_t>(rank, 1, n);
    const double e = values[rank - 1];
    if (e >= values.back()) continue;
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }
  return edges;
}

/// Number of edges strictly below v: ties at an edge go to the lower bin.
inline int quantile_bin(double v, const std::vector<double>& edges) {
  return static_cast<int>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
}

inline FeatureMatrix preprocess(const RawTable& table, int bins = 10) {
  if (bins < 2) throw ValidationError("bins must be >= 2");
  const std::size_t n = table.rows();
  std::vector<std::vector<int>> codes;
  std::vector<int> widths;
  std::vector<std::string> names;
  for (const auto& col : table.columns) {
    std::vector<int> code(n);
    if (col.numeric) {
      auto edges = quantile_edges(col.numbers, bins);
      if (edges.empty()) warn("column '" + col.name + "' is constant; emitting a single one-hot level");
      for (std::size_t r = 0; r < n; ++r) code[r] = quantile_bin(col.numbers[r], edges);
      for (std::size_t b = 0; b <= edges.size(); ++b) names.push_back(col.name + "[bin" + std::to_string(b) + "]");
      widths.push_back(static_cast<int>(edges.size()) + 1);
    } else {
      for (std::size_t r = 0; r < n; ++r) {
        code[r] = static_cast<int>(std::lower_bound(col.levels.begin(), col.levels.end(), col.text[r]) -
                                   col.levels.begin());
      }
      for (const auto& lv : col.levels) names.push_back(col.name + "=" + lv);
      widths.push_back(static_cast<int>(col.levels.size()));
    }
    codes.push_back(std::move(code));
  }
  FeatureMatrix fm;
  fm.names = names;
  fm.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  Eigen::Index offset = 0;
  for (std::size_t f = 0; f < codes.size(); ++f) {
    for (std::size_t r = 0; r < n; ++r) fm.X(static_cast<Eigen::Index>(r), offset + codes[f][r]) = 1.0;
    offset += widths[f];
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Scenario constructions

/// Binary relabeling: 0 for the positive class, 1 for everything else.
inline std::vector<int> make_one_vs_all(const std::vector<int>& labels, int positive_class) {
  if (std::find(labels.begin(), labels.end(), positive_class) == labels.end()) {
    throw ValidationError("positive class " + std::to_string(positive_class) + " does not occur in labels");
  }
  std::vector<int> out;
  out.reserve(labels.size());
  for (int y : labels) out.push_back(y == positive_class ? 0 : 1);
  return out;
}

struct SubpopShift {
  std::vector<int> labels;  // {first class -> 0, second -> 1, rest -> 2}
  std::vector<bool> test_mask;
};

/// The two smallest original classes are kept; all remaining classes merge into 2.
inline SubpopShift make_subpop_shift(const std::vector<int>& labels) {
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 3) throw ValidationError("subpopulation shift needs at least 3 distinct classes");
  const int first = *distinct.begin();
  const int second = *std::next(distinct.begin());
  SubpopShift out;
  for (int y : labels) {
    const int z = y == first ? 0 : (y == second ? 1 : 2);
    out.labels.push_back(z);
    out.test_mask.push_back(z != 2);
  }
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> pool, validation, test;
};

inline SplitIndices split(std::size_t n, double pool_frac, double val_frac, double test_frac, std::uint64_t seed) {
  if (!(pool_frac > 0 && val_frac > 0 && test_frac > 0) || pool_frac + val_frac + test_frac > 1.0 + 1e-12) {
    throw ValidationError("split fractions must be positive and sum to at most 1");
  }
  auto size_of = [n](double f) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9));
  };
  const std::size_t np = size_of(pool_frac), nv = size_of(val_frac), nt = size_of(test_frac);
  if (np < 1 || nv < 1 || nt < 1) throw ValidationError("n=" + std::to_string(n) + " too small for the requested split");
  const auto perm = permutation(n, Stream::make(seed, "split"));
  SplitIndices s;
  s.pool.assign(perm.begin(), perm.begin() + np);
  s.validation.assign(perm.begin() + np, perm.begin() + np + nv);
  s.test.assign(perm.begin() + np + nv, perm.begin() + np + nv + nt);
  return s;
}

/// Holds the pool labels. Only the experiment loop asks it for labels, and
/// only for points it has committed to.
class LabelOracle {
 public:
  LabelOracle() = default;
  explicit LabelOracle(std::vector<int> labels) : labels_(std::move(labels)) {}

  int acquire(std::size_t pool_index) const {
    if (pool_index >= labels_.size()) throw ValidationError("label request outside the pool");
    return labels_.at(pool_index);
  }
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<int> labels_;
};

/// Pool (labels hidden behind the oracle), unlabeled validation set drawn from
/// the test distribution, and the labeled test set. Validation labels are not
/// representable here.
struct Scenario {
  FeatureMatrix pool;
  FeatureMatrix validation;
  FeatureMatrix test;
  std::vector<int> test_labels;
  int num_classes = 0;
  std::vector<std::size_t> initial_labeled_indices;
  LabelOracle oracle;
};

namespace detail {

inline FeatureMatrix take_rows(const FeatureMatrix& fm, const std::vector<std::size_t>& idx) {
  FeatureMatrix out;
  out.names = fm.names;
  out.X.resize(static_cast<Eigen::Index>(idx.size()), fm.X.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.X.row(static_cast<Eigen::Index>(r)) = fm.X.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

inline void check_scenario(const Scenario& s) {
  if (s.num_classes < 2) throw ValidationError("scenario needs at least 2 classes");
  if (s.pool.rows() == 0 || s.validation.rows() == 0 || s.test.rows() == 0) {
    throw ValidationError("scenario splits must be non-empty");
  }
  if (s.oracle.size() != s.pool.rows() || s.test_labels.size() != s.test.rows()) {
    throw ValidationError("scenario label counts do not match feature rows");
  }
  if (s.pool.cols() != s.validation.cols() || s.pool.cols() != s.test.cols()) {
    throw ValidationError("scenario feature widths differ across splits");
  }
  for (int y : s.test_labels) {
    if (y < 0 || y >= s.num_classes) throw ValidationError("test label out of range");
  }
  for (std::size_t i = 0; i < s.oracle.size(); ++i) {
    const int y = s.oracle.acquire(i);
    if (y < 0 || y >= s.num_classes) throw ValidationError("pool label out of range");
  }
  std::set<std::size_t> init(s.initial_labeled_indices.begin(), s.initial_labeled_indices.end());
  if (init.size() != s.initial_labeled_indices.size()) throw ValidationError("duplicate initial labeled indices");
  if (!init.empty() && *init.rbegin() >= s.pool.rows()) throw ValidationError("initial labeled index outside the pool");
}

}  // namespace detail

/// Splits a labeled feature matrix into a scenario. When `test_mask` is given,
/// validation and test keep only masked-in rows while the pool keeps all.
inline Scenario make_scenario(const FeatureMatrix& features, const std::vector<int>& labels, int num_classes,
                              double pool_frac, double val_frac, double test_frac, std::uint64_t seed,
                              const std::vector<bool>* test_mask = nullptr) {
  if (labels.size() != features.rows()) throw ValidationError("label count does not match feature rows");
  auto s = split(features.rows(), pool_frac, val_frac, test_frac, seed);
  if (test_mask) {
    auto keep = [&](std::vector<std::size_t>& v) {
      std::erase_if(v, [&](std::size_t i) { return !(*test_mask)[i]; });
    };
    keep(s.validation);
    keep(s.test);
  }
  Scenario sc;
  sc.num_classes = num_classes;
  sc.pool = detail::take_rows(features, s.pool);
  sc.validation = detail::take_rows(features, s.validation);
  sc.test = detail::take_rows(features, s.test);
  std::vector<int> pool_labels;
  for (auto i : s.pool) pool_labels.push_back(labels[i]);
  for (auto i : s.test) sc.test_labels.push_back(labels[i]);
  sc.oracle = LabelOracle(std::move(pool_labels));
  detail::check_scenario(sc);
  return sc;
}

// ---------------------------------------------------------------------------
// Synthetic problems

struct SyntheticSpec {
  Eigen::MatrixXd true_weights;  // c x d
  Eigen::VectorXd true_bias;     // c
  std::vector<double> class_priors;
  std::size_t n_pool = 0, n_val = 0, n_test = 0;
  double feature_mean = 0.0;
  double feature_std = 1.0;

  int num_classes() const { return static_cast<int>(true_weights.rows()); }
  int dim() const { return static_cast<int>(true_weights.cols()); }

  void validate() const {
    if (true_weights.rows() < 2 || true_weights.cols() < 1) throw ValidationError("synthetic spec needs c>=2, d>=1");
    if (true_bias.size() != true_weights.rows()) throw ValidationError("synthetic bias length must equal class count");
    if (class_priors.size() != static_cast<std::size_t>(true_weights.rows())) {
      throw ValidationError("class_priors length must equal class count");
    }
    double total = 0.0;
    for (double p : class_priors) {
      if (!(p > 0.0)) throw ValidationError("class priors must be positive");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("class priors must sum to 1");
    if (n_pool == 0 || n_val == 0 || n_test == 0) throw ValidationError("synthetic split sizes must be positive");
    if (!(feature_std > 0.0)) throw ValidationError("feature_std must be positive");
    if (!true_weights.allFinite() || !true_bias.allFinite()) throw ValidationError("synthetic weights must be finite");
  }
};

/// Random ground truth: weight entries N(0, weight_scale^2 / d), zero bias.
inline SyntheticSpec random_synthetic_spec(int num_classes, int dim, std::vector<double> class_priors,
                                           double weight_scale, std::size_t n_pool, std::size_t n_val,
                                           std::size_t n_test, std::uint64_t weight_seed) {
  SyntheticSpec spec;
  spec.true_weights.resize(num_classes, dim);
  Stream s = Stream::make(weight_seed, "synthetic-weights");
  const double sd = weight_scale / std::sqrt(static_cast<double>(dim));
  for (int a = 0; a < num_classes; ++a)
    for (int j = 0; j < dim; ++j) spec.true_weights(a, j) = sd * s.normal();
  spec.true_bias = Eigen::VectorXd::Zero(num_classes);
  spec.class_priors = std::move(class_priors);
  spec.n_pool = n_pool;
  spec.n_val = n_val;
  spec.n_test = n_test;
  return spec;
}

/// Class probabilities of the generating model: softmax(W* x + b* + ln prior).
inline Eigen::VectorXd synthetic_class_probs(const SyntheticSpec& spec, const Eigen::VectorXd& x) {
  Eigen::VectorXd z = spec.true_weights * x + spec.true_bias;
  for (int a = 0; a < z.size(); ++a) z(a) += std::log(spec.class_priors[static_cast<std::size_t>(a)]);
  z.array() -= z.maxCoeff();
  Eigen::VectorXd p = z.array().exp();
  return p / p.sum();
}

struct SyntheticData {
  Scenario scenario;
  std::vector<int> validation_labels;  // generator-side only; never enters Scenario
};

inline SyntheticData generate_synthetic_with_truth(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int d = spec.dim();
  auto draw = [&](std::size_t n, int split_id, FeatureMatrix& fm, std::vector<int>& y) {
    fm.X.resize(static_cast<Eigen::Index>(n), d);
    fm.names.clear();
    for (int j = 0; j < d; ++j) fm.names.push_back("x" + std::to_string(j));
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Stream sx = Stream::make(seed, "synthetic-x", split_id, i);
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x(j) = spec.feature_mean + spec.feature_std * sx.normal();
      fm.X.row(static_cast<Eigen::Index>(i)) = x.transpose();
      const Eigen::VectorXd p = synthetic_class_probs(spec, x);
      Stream sy = Stream::make(seed, "synthetic-y", split_id, i);
      y[i] = sy.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    }
  };
  SyntheticData out;
  Scenario& sc = out.scenario;
  sc.num_classes = spec.num_classes();
  std::vector<int> pool_labels;
  draw(spec.n_pool, 0, sc.pool, pool_labels);
  draw(spec.n_val, 1, sc.validation, out.validation_labels);
  draw(spec.n_test, 2, sc.test, sc.test_labels);
  sc.oracle = LabelOracle(std::move(pool_labels));
  detail::check_scenario(sc);
  return out;
}

inline Scenario generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  return generate_synthetic_with_truth(spec, seed).scenario;
}

// ---------------------------------------------------------------------------
// JSON forms

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"num_classes", "dim",          "class_priors", "weight_scale",
                                              "weight_seed", "true_weights", "true_bias",    "n_pool",
                                              "n_val",       "n_test",       "feature_mean", "feature_std"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ValidationError("unknown synthetic spec key: " + it.key());
  }
  SyntheticSpec spec;
  const int c = j.at("num_classes").get<int>();
  std::vector<double> priors = j.contains("class_priors") ? j.at("class_priors").get<std::vector<double>>()
                                                          : std::vector<double>(static_cast<std::size_t>(c), 1.0 / c);
  if (j.contains("true_weights")) {
    auto rows = j.at("true_weights").get<std::vector<std::vector<double>>>();
    if (rows.empty() || rows.front().empty()) throw ValidationError("true_weights must be a non-empty matrix");
    spec.true_weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      if (rows[a].size() != rows.front().size()) throw ValidationError("true_weights rows differ in length");
      for (std::size_t k = 0; k < rows[a].size(); ++k) spec.true_weights(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) = rows[a][k];
    }
    spec.true_bias = Eigen::VectorXd::Zero(spec.true_weights.rows());
    spec.class_priors = priors;
  } else {
    spec = random_synthetic_spec(c, j.at("dim").get<int>(), priors, j.value("weight_scale", 1.0), 0, 0, 0,
                                 j.value("weight_seed", std::uint64_t{0}));
  }
  if (j.contains("true_bias")) {
    auto b = j.at("true_bias").get<std::vector<double>>();
    spec.true_bias = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  spec.n_pool = j.at("n_pool").get<std::size_t>();
  spec.n_val = j.at("n_val").get<std::size_t>();
  spec.n_test = j.at("n_test").get<std::size_t>();
  spec.feature_mean = j.value("feature_mean", 0.0);
  spec.feature_std = j.value("feature_std", 1.0);
  if (spec.num_classes() != c) throw ValidationError("num_classes does not match true_weights");
  spec.validate();
  return spec;
}

namespace detail {

inline void write_features(const std::filesystem::path& path, const FeatureMatrix& fm) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  csv::Row header = fm.names;
  if (header.size() != fm.cols()) {
    header.clear();
    for (std::size_t j = 0; j < fm.cols(); ++j) header.push_back("x" + std::to_string(j));
  }
  csv::write_row(out, header);
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < fm.X.rows(); ++r) {
    for (Eigen::Index c = 0; c < fm.X.cols(); ++c) {
      if (c) out << ',';
      out << fm.X(r, c);
    }
    out << '\n';
  }
}

inline void write_labels(const std::filesystem::path& path, const std::vector<int>& y) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "label\n";
  for (int v : y) out << v << '\n';
}

inline FeatureMatrix read_features(const std::filesystem::path& path) {
  const auto doc = csv::load(path.string());
  FeatureMatrix fm;
  fm.names = doc.header;
  fm.X.resize(static_cast<Eigen::Index>(doc.rows.size()), static_cast<Eigen::Index>(doc.header.size()));
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    for (std::size_t c = 0; c < doc.header.size(); ++c) {
      auto v = parse_decimal(doc.rows[r][c]);
      if (!v || !std::isfinite(*v)) {
        throw ValidationError(path.string() + " line " + std::to_string(doc.line_numbers[r]) + ": non-numeric feature");
      }
      fm.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
    }
  }
  return fm;
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
  const auto doc = csv::load(path.string());
  if (doc.header.size() != 1) throw ValidationError(path.string() + ": label file must have a single column");
  std::vector<int> y;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    auto v = parse_decimal(doc.rows[r][0]);
    if (!v || *v != std::floor(*v)) {
      throw ValidationError(path.string() + " line " + std::to_string(doc.line_numbers[r]) + ": label is not an integer");
    }
    y.push_back(static_cast<int>(*v));
  }
  return y;
}

}  // namespace detail

/// Writes the scenario as CSV files plus `manifest.json` into `dir`.
inline void export_scenario(const Scenario& sc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_features(dir / "pool.csv", sc.pool);
  std::vector<int> pool_labels;
  for (std::size_t i = 0; i < sc.oracle.size(); ++i) pool_labels.push_back(sc.oracle.acquire(i));
  detail::write_labels(dir / "pool_labels.csv", pool_labels);
  detail::write_features(dir / "validation.csv", sc.validation);
  detail::write_features(dir / "test.csv", sc.test);
  detail::write_labels(dir / "test_labels.csv", sc.test_labels);
  nlohmann::json m = {{"num_classes", sc.num_classes},
                      {"pool_features", "pool.csv"},
                      {"pool_labels", "pool_labels.csv"},
                      {"validation_features", "validation.csv"},
                      {"test_features", "test.csv"},
                      {"test_labels", "test_labels.csv"},
                      {"initial_labeled_indices", sc.initial_labeled_indices}};
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

/// Reads a manifest; file names are resolved relative to the manifest's directory.
inline Scenario import_scenario(const std::filesystem::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(csv::read_file(manifest_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  static const std::set<std::string> known = {"num_classes",         "pool_features", "pool_labels",
                                              "validation_features", "test_features", "test_labels",
                                              "initial_labeled_indices"};
  for (auto it = m.begin(); it != m.end(); ++it) {
    if (!known.count(it.key())) throw ValidationError("unknown manifest key: " + it.key());
  }
  const auto base = manifest_path.parent_path();
  Scenario sc;
  try {
    sc.num_classes = m.at("num_classes").get<int>();
    sc.pool = detail::read_features(base / m.at("pool_features").get<std::string>());
    sc.oracle = LabelOracle(detail::read_labels(base / m.at("pool_labels").get<std::string>()));
    sc.validation = detail::read_features(base / m.at("validation_features").get<std::string>());
    sc.test = detail::read_features(base / m.at("test_features").get<std::string>());
    sc.test_labels = detail::read_labels(base / m.at("test_labels").get<std::string>());
    if (m.contains("initial_labeled_indices")) {
      sc.initial_labeled_indices = m.at("initial_labeled_indices").get<std::vector<std::size_t>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  detail::check_scenario(sc);
  return sc;
}

}  // namespace parbals
