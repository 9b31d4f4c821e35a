#pragma once

// Brute-force reference computations and the oracle batteries behind
// `parbals oracle-check`. Everything here trades speed for directness:
// explicit enumeration of label configurations, Gauss-Jordan inverses and
// from-scratch recomputation instead of incremental updates.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "parbals/acquisition.hpp"
#include "parbals/bait.hpp"
#include "parbals/bayes_linear.hpp"
#include "parbals/error.hpp"
#include "parbals/parallel.hpp"
#include "parbals/parbals.hpp"
#include "parbals/rng.hpp"

namespace parbals::oracle {

// ---------------------------------------------------------------------------
// Reference computations

/// Inverse by Gauss-Jordan elimination with partial pivoting.
inline Eigen::MatrixXd gauss_jordan_inverse(const Eigen::MatrixXd& M) {
  const Eigen::Index n = M.rows();
  if (M.cols() != n) throw ValidationError("gauss_jordan_inverse: matrix is not square");
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(2 * n), 0.0));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) a[r][c] = M(r, c);
    a[r][n + r] = 1.0;
  }
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) throw NumericalError("gauss_jordan_inverse: singular matrix");
    std::swap(a[piv], a[col]);
    const double p = a[col][col];
    for (auto& v : a[col]) v /= p;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double f = a[r][col];
      for (Eigen::Index c = 0; c < 2 * n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Eigen::MatrixXd inv(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) inv(r, c) = a[r][n + c];
  return inv;
}

/// I(Y_batch; W) by listing every label configuration and forming its joint
/// probability per posterior sample as a plain product.
inline double joint_mi_enumerated(const PredictiveTensor& t, const std::vector<int>& batch) {
  std::size_t configs = 1;
  for (std::size_t i = 0; i < batch.size(); ++i) configs *= static_cast<std::size_t>(t.c);
  double joint_h = 0.0;
  std::vector<int> y(batch.size(), 0);
  for (std::size_t code = 0; code < configs; ++code) {
    std::size_t rest = code;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      y[i] = static_cast<int>(rest % static_cast<std::size_t>(t.c));
      rest /= static_cast<std::size_t>(t.c);
    }
    double mean = 0.0;
    for (int j = 0; j < t.k; ++j) {
      double p = 1.0;
      for (std::size_t i = 0; i < batch.size(); ++i) p *= t(j, batch[i], y[i]);
      mean += p;
    }
    mean /= t.k;
    if (mean > 0.0) joint_h -= mean * std::log(mean);
  }
  double cond = 0.0;
  for (int i : batch) {
    for (int j = 0; j < t.k; ++j) {
      for (int yy = 0; yy < t.c; ++yy) {
        const double p = t(j, i, yy);
        if (p > 0.0) cond -= p * std::log(p) / t.k;
      }
    }
  }
  return joint_h - cond;
}

/// Pairwise MI from an explicitly accumulated c x c joint table.
inline double pairwise_mi_enumerated(const PredictiveTensor& t, int a, int b) {
  std::vector<std::vector<double>> joint(static_cast<std::size_t>(t.c), std::vector<double>(static_cast<std::size_t>(t.c), 0.0));
  for (int j = 0; j < t.k; ++j)
    for (int y1 = 0; y1 < t.c; ++y1)
      for (int y2 = 0; y2 < t.c; ++y2) joint[y1][y2] += t(j, a, y1) * t(j, b, y2) / t.k;
  double mi = 0.0;
  for (int y1 = 0; y1 < t.c; ++y1) {
    double pa = 0.0;
    for (int y2 = 0; y2 < t.c; ++y2) pa += joint[y1][y2];
    for (int y2 = 0; y2 < t.c; ++y2) {
      double pb = 0.0;
      for (int z = 0; z < t.c; ++z) pb += joint[z][y2];
      if (joint[y1][y2] > 0.0) mi += joint[y1][y2] * std::log(joint[y1][y2] / (pa * pb));
    }
  }
  return mi;
}

/// Greedy BatchBALD recomputing every candidate's joint MI from scratch.
inline GreedyBatch batchbald_greedy_enumerated(const PredictiveTensor& t, std::size_t B) {
  GreedyBatch out;
  std::vector<int> batch;
  for (std::size_t step = 0; step < B; ++step) {
    int best = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < t.n; ++i) {
      if (std::find(batch.begin(), batch.end(), i) != batch.end()) continue;
      auto trial = batch;
      trial.push_back(i);
      const double v = joint_mi_enumerated(t, trial);
      if (v > best_v + 1e-12) {
        best = i;
        best_v = v;
      }
    }
    batch.push_back(best);
    out.selected.push_back(static_cast<std::size_t>(best));
    out.gains.push_back(best_v);
  }
  return out;
}

/// Tr(A^-1 G) with the inverse from Gauss-Jordan.
inline double bait_objective_dense(const Eigen::MatrixXd& A, const Eigen::MatrixXd& G) {
  return (gauss_jordan_inverse(A) * G).trace();
}

/// Fisher information of one point at `w`, assembled entry by entry:
/// (delta_ab p_a - p_a p_b) x_i x_j.
inline Eigen::MatrixXd fisher_block_dense(const WeightPoint& w, const Eigen::RowVectorXd& x) {
  const int c = w.classes(), d = w.dim();
  const Eigen::RowVectorXd p = softmax_probs(w, x);
  Eigen::VectorXd xt(d + 1);
  xt << x.transpose(), 1.0;
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(param_count(c, d), param_count(c, d));
  for (int a = 0; a < c; ++a)
    for (int b = 0; b < c; ++b)
      for (int i = 0; i <= d; ++i)
        for (int j = 0; j <= d; ++j)
          F(a * (d + 1) + i, b * (d + 1) + j) = ((a == b ? p(a) : 0.0) - p(a) * p(b)) * xt(i) * xt(j);
  return F;
}

/// Greedy BAIT recomputing A from scratch and inverting it densely for every
/// candidate at every step.
inline BaitResult bait_greedy_dense(const WeightPoint& map, const Eigen::MatrixXd& labeled, const Eigen::MatrixXd& pool,
                                    std::size_t B, const Prior& prior) {
  const Eigen::Index P = param_count(map.classes(), map.dim());
  Eigen::MatrixXd A = prior.precision() * Eigen::MatrixXd::Identity(P, P);
  for (Eigen::Index i = 0; i < labeled.rows(); ++i) A += fisher_block_dense(map, labeled.row(i));
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(P, P);
  std::vector<Eigen::MatrixXd> blocks;
  for (Eigen::Index i = 0; i < pool.rows(); ++i) {
    blocks.push_back(fisher_block_dense(map, pool.row(i)));
    G += blocks.back();
  }
  BaitResult out;
  out.initial_objective = bait_objective_dense(A, G);
  std::vector<bool> taken(blocks.size(), false);
  for (std::size_t step = 0; step < B; ++step) {
    std::size_t best = blocks.size();
    double best_v = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (taken[i]) continue;
      const double v = bait_objective_dense(A + blocks[i], G);
      if (v < best_v) {
        best = i;
        best_v = v;
      }
    }
    taken[best] = true;
    A += blocks[best];
    out.selected.push_back(best);
    out.objectives.push_back(best_v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random instances

inline PredictiveTensor random_tensor(int k, int n, int c, Stream& s) {
  PredictiveTensor t;
  t.k = k;
  t.n = n;
  t.c = c;
  t.probs.assign(static_cast<std::size_t>(c), Eigen::MatrixXd(k, n));
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      std::vector<double> g(static_cast<std::size_t>(c));
      for (int y = 0; y < c; ++y) {
        g[y] = -std::log(s.uniform());  // Dirichlet(1) via normalized exponentials
        total += g[y];
      }
      for (int y = 0; y < c; ++y) t.probs[y](j, i) = g[y] / total;
    }
  for (int i = 0; i < n; ++i) t.point_ids.push_back(static_cast<std::size_t>(i));
  return t;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Stream& s, double scale = 1.0) {
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = scale * s.normal();
  return M;
}

/// Random SPD matrix R R^T / n + eps I.
inline Eigen::MatrixXd random_spd(Eigen::Index n, Stream& s, double eps = 0.1) {
  const Eigen::MatrixXd R = random_matrix(n, n, s);
  return R * R.transpose() / static_cast<double>(n) + eps * Eigen::MatrixXd::Identity(n, n);
}

/// A small logistic-regression world: labels drawn from a random true model.
struct ToyProblem {
  LabeledSet L;
  Eigen::MatrixXd D;
  Eigen::MatrixXd V;
};

inline ToyProblem random_toy_problem(int c, int d, std::size_t n_labeled, std::size_t n_pool, std::size_t n_val,
                                     double weight_scale, Stream s) {
  const WeightPoint truth{random_matrix(c, d, s, weight_scale), random_matrix(c, 1, s, 0.5).col(0)};
  ToyProblem tp{LabeledSet(c, d), random_matrix(static_cast<Eigen::Index>(n_pool), d, s),
                random_matrix(static_cast<Eigen::Index>(n_val), d, s)};
  for (std::size_t i = 0; i < n_labeled; ++i) {
    const Eigen::RowVectorXd x = random_matrix(1, d, s);
    const Eigen::RowVectorXd p = softmax_probs(truth, x);
    std::vector<double> probs(p.data(), p.data() + p.size());
    tp.L.append(x, s.categorical(probs));
  }
  return tp;
}

// ---------------------------------------------------------------------------
// Batteries

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Report {
  std::string suite;
  std::string table;
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }

  std::string format() const {
    std::ostringstream out;
    out << "== " << suite << " ==\n";
    if (!table.empty()) out << table;
    for (const auto& c : checks) out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    out << (passed() ? "PASS" : "FAIL") << ' ' << suite << '\n';
    return out.str();
  }
};

inline std::string sci(double v) {
  std::ostringstream o;
  o << std::scientific << std::setprecision(3) << v;
  return o.str();
}

struct McOptions {
  std::size_t trials = 200;
  std::vector<int> ms = {1, 4, 16, 64, 256};
  std::size_t n_pool = 12;
  std::size_t n_val = 8;
  std::size_t n_committed = 3;
  std::size_t n_labeled = 8;
  int classes = 2;
  int dim = 2;
  int k = 50;
  double weight_scale = 2.0;
  std::uint64_t seed = 2024;
  double isotonic_tolerance = 0.05;
  double min_final_match = 0.9;
};

struct McResult {
  std::vector<double> match_rate;  // per m
  std::vector<double> mean_regret; // per m, exact objective units
  Report report;
};

/// Monte Carlo ParBaLS versus exact enumeration over the committed points'
/// pseudo-labels. Each trial draws a toy problem, commits a random S of the
/// pool, and compares the argmax of the m-universe estimate with the argmax
/// of the exact objective.
inline McResult parbals_mc_battery(const McOptions& opt = {}) {
  const std::size_t nm = opt.ms.size();
  std::vector<std::vector<int>> match(opt.trials, std::vector<int>(nm, 0));
  std::vector<std::vector<double>> regret(opt.trials, std::vector<double>(nm, 0.0));
  parallel_for(opt.trials, [&](std::size_t trial) {
    const std::uint64_t trial_seed = Stream::make(opt.seed, "mc-trial", trial).key();
    const auto tp = random_toy_problem(opt.classes, opt.dim, opt.n_labeled, opt.n_pool, opt.n_val, opt.weight_scale,
                                       Stream::make(trial_seed, "problem"));
    ParbalsConfig cfg;
    cfg.k = opt.k;
    cfg.seed = trial_seed;
    cfg.val_subsample = opt.n_val;
    const auto ensemble = laplace_posterior(tp.L, cfg.prior, cfg.k, Stream::make(trial_seed, "fit").key());
    const auto S = sample_without_replacement(opt.n_pool, opt.n_committed, Stream::make(trial_seed, "committed"));
    const auto exact = exact_parbals_objectives(ensemble, tp.L, tp.D, tp.V, S, cfg);
    std::vector<std::size_t> remaining;
    for (std::size_t x = 0; x < opt.n_pool; ++x)
      if (std::find(S.begin(), S.end(), x) == S.end()) remaining.push_back(x);
    std::size_t best = remaining.front();
    for (auto x : remaining)
      if (exact.values[x] > exact.values[best]) best = x;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      cfg.m = opt.ms[mi];
      auto u = sample_universes(ensemble, tp.L, tp.D, cfg);
      for (auto s : S) parbals_commit(u, tp.D, s, cfg);
      const auto choice = parbals_next(u, tp.D, tp.V, remaining);
      match[trial][mi] = choice.position == best ? 1 : 0;
      regret[trial][mi] = exact.values[best] - exact.values[choice.position];
    }
  });

  McResult res;
  std::ostringstream table;
  table << std::setw(6) << "m" << std::setw(14) << "argmax match" << std::setw(16) << "mean regret" << '\n';
  for (std::size_t mi = 0; mi < nm; ++mi) {
    double hits = 0.0, reg = 0.0;
    for (std::size_t t = 0; t < opt.trials; ++t) {
      hits += match[t][mi];
      reg += regret[t][mi];
    }
    res.match_rate.push_back(hits / static_cast<double>(opt.trials));
    res.mean_regret.push_back(reg / static_cast<double>(opt.trials));
    table << std::setw(6) << opt.ms[mi] << std::setw(14) << std::fixed << std::setprecision(3) << res.match_rate.back()
          << std::setw(16) << sci(res.mean_regret.back()) << '\n';
  }
  res.report.suite = "parbals-mc";
  res.report.table = table.str();

  bool iso = true;
  std::string worst;
  for (std::size_t mi = 1; mi < nm; ++mi) {
    if (res.match_rate[mi] < res.match_rate[mi - 1] - opt.isotonic_tolerance) {
      iso = false;
      worst = "drop at m=" + std::to_string(opt.ms[mi]);
    }
  }
  res.report.checks.push_back({"match rate non-decreasing in m (tolerance 0.05)", iso, iso ? "ok" : worst});
  bool iso_regret = true;
  for (std::size_t mi = 1; mi < nm; ++mi)
    if (res.mean_regret[mi] > res.mean_regret[mi - 1] + 1e-3) iso_regret = false;
  res.report.checks.push_back({"mean regret non-increasing in m (tolerance 1e-3)", iso_regret, "see table"});
  const double last = res.match_rate.back();
  res.report.checks.push_back({"match rate at largest m >= 0.9", last >= opt.min_final_match,
                               "observed " + std::to_string(last) + " over " + std::to_string(opt.trials) + " trials"});
  return res;
}

/// BAIT: Woodbury objective and greedy against dense recomputation.
inline Report bait_battery(std::uint64_t seed = 7, std::size_t instances = 50) {
  Report r;
  r.suite = "bait";
  double worst_obj = 0.0, worst_identity = 0.0, worst_step = 0.0;
  bool same_choices = true, monotone = true;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    Stream s = Stream::make(seed, "bait-instance", inst);
    const Eigen::Index P = 2 + static_cast<Eigen::Index>(s.index(9));
    BaitState st{random_spd(P, s), random_spd(P, s, 0.0), {}};
    const double ours = bait_objective(st), ref = bait_objective_dense(st.A, st.G);
    worst_obj = std::max(worst_obj, std::abs(ours - ref) / std::abs(ref));
    BaitState same{st.A, st.A, {}};
    worst_identity = std::max(worst_identity, std::abs(bait_objective(same) - static_cast<double>(P)));
  }
  for (std::size_t inst = 0; inst < 10; ++inst) {
    Stream s = Stream::make(seed, "bait-greedy", inst);
    const auto tp = random_toy_problem(2 + static_cast<int>(inst % 2), 2, 4, 10, 1, 1.5, s);
    const auto fit = map_fit(tp.L, Prior{});
    const auto fast = bait_greedy(fit.point, tp.L.X, tp.D, 5, Prior{});
    const auto slow = bait_greedy_dense(fit.point, tp.L.X, tp.D, 5, Prior{});
    if (fast.selected != slow.selected) same_choices = false;
    double prev = fast.initial_objective;
    for (std::size_t k = 0; k < fast.objectives.size(); ++k) {
      worst_step = std::max(worst_step, std::abs(fast.objectives[k] - slow.objectives[k]) / std::abs(slow.objectives[k]));
      if (fast.objectives[k] > prev * (1 + 1e-12)) monotone = false;
      prev = fast.objectives[k];
    }
  }
  r.checks.push_back({"objective vs Gauss-Jordan inverse on 50 SPD instances (1e-8 rel)", worst_obj <= 1e-8,
                      "max rel err " + sci(worst_obj)});
  r.checks.push_back({"Tr(A^-1 A) = P (1e-9)", worst_identity <= 1e-9, "max abs err " + sci(worst_identity)});
  r.checks.push_back({"greedy choices match dense recomputation on 10-point pools", same_choices,
                      same_choices ? "identical" : "differ"});
  r.checks.push_back({"greedy objectives match dense recomputation (1e-8 rel)", worst_step <= 1e-8,
                      "max rel err " + sci(worst_step)});
  r.checks.push_back({"objective non-increasing over greedy steps", monotone, monotone ? "ok" : "increase seen"});
  return r;
}

/// BatchBALD: joint MI and greedy selection against full enumeration.
inline Report batchbald_battery(std::uint64_t seed = 11, std::size_t instances = 20) {
  Report r;
  r.suite = "batchbald";
  double worst_joint = 0.0, worst_bald = 0.0, worst_gain = 0.0;
  bool same_choices = true;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    Stream s = Stream::make(seed, "batchbald-instance", inst);
    const int c = 2 + static_cast<int>(s.index(2));
    const int k = 2 + static_cast<int>(s.index(9));
    const int n = 6;
    const auto t = random_tensor(k, n, c, s);
    for (int size = 0; size <= 4; ++size) {
      std::vector<int> batch;
      for (int i = 0; i < size; ++i) batch.push_back(i);
      worst_joint = std::max(worst_joint, std::abs(batchbald_joint_mi(t, batch) - joint_mi_enumerated(t, batch)));
    }
    for (int i = 0; i < n; ++i)
      worst_bald = std::max(worst_bald, std::abs(batchbald_joint_mi(t, {i}) - bald_score(t, i)));
    const auto fast = select_batchbald(t, 3);
    const auto slow = batchbald_greedy_enumerated(t, 3);
    if (fast.selected != slow.selected) same_choices = false;
    for (std::size_t j = 0; j < fast.gains.size(); ++j)
      worst_gain = std::max(worst_gain, std::abs(fast.gains[j] - slow.gains[j]));
  }
  r.checks.push_back({"joint MI vs enumerated joint table (1e-10)", worst_joint <= 1e-10, "max abs err " + sci(worst_joint)});
  r.checks.push_back({"single-point joint MI equals BALD (1e-12)", worst_bald <= 1e-12, "max abs err " + sci(worst_bald)});
  r.checks.push_back({"greedy choices match enumeration", same_choices, same_choices ? "identical" : "differ"});
  r.checks.push_back({"greedy objective values match enumeration (1e-10)", worst_gain <= 1e-10, "max abs err " + sci(worst_gain)});
  return r;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"parbals-mc", "bait", "batchbald"};
  return names;
}

inline Report run_battery(const std::string& suite) {
  if (suite == "parbals-mc") return parbals_mc_battery().report;
  if (suite == "bait") return bait_battery();
  if (suite == "batchbald") return batchbald_battery();
  throw ValidationError("unknown oracle suite: " + suite + " (expected parbals-mc, bait or batchbald)");
}

}  // namespace parbals::oracle
