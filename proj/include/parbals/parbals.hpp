#pragma once

// Partial Batch Label Sampling for EPIG.
//
// A batch is built one point at a time. Each of m "universes" carries a full
// pseudo-label assignment over the pool, sampled once from the current
// posterior predictive, and a model refit on L plus the pseudo-labeled points
// committed so far. The next point maximizes the universe-averaged EPIG.
//
// All refits inside one selection share a posterior-noise seed, so two
// universes with the same pseudo-label history hold bit-identical models.
// Scoring exploits this: each distinct history is scored once.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "parbals/acquisition.hpp"
#include "parbals/bayes_linear.hpp"
#include "parbals/error.hpp"
#include "parbals/parallel.hpp"
#include "parbals/rng.hpp"

namespace parbals {

enum class ParbalsVariant { sampled, map };
enum class UniverseCoupling { independent, per_universe_weight };

struct ParbalsConfig {
  int m = 16;
  std::size_t B = 1;
  ParbalsVariant variant = ParbalsVariant::sampled;
  UniverseCoupling coupling = UniverseCoupling::independent;
  std::size_t val_subsample = 500;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  int k = 400;
  Prior prior;
  FitOptions fit;

  /// The MAP variant always runs a single universe.
  int universes() const { return variant == ParbalsVariant::map ? 1 : m; }

  std::uint64_t refit_seed() const { return Stream::make(seed, "parbals-refit", iteration).key(); }

  void validate() const {
    if (m < 1) throw ValidationError("parbals: m must be >= 1");
    if (k < 1) throw ValidationError("parbals: k must be >= 1");
    if (val_subsample < 1) throw ValidationError("parbals: val_subsample must be >= 1");
    prior.validate();
  }
};

struct PseudoLabelUniverses {
  int m = 0;
  std::vector<std::vector<int>> assignments;  // m x |D|
  std::vector<PosteriorEnsemble> models;
  std::vector<LabeledSet> data;         // L plus pseudo-labeled committed points, per universe
  std::vector<std::size_t> committed;   // positions in D, in commit order
  std::size_t refits = 0;
};

/// Draws the m pseudo-label assignments and seeds every universe with the
/// L-ensemble. Sampled variant: y_x ~ Categorical(BMA row of x) from stream
/// (seed, "pseudo-label", iteration, universe, x); with per-universe-weight
/// coupling, every label of universe i comes from one posterior sample.
/// MAP variant: argmax of the BMA row, ties to the lowest class.
inline PseudoLabelUniverses sample_universes(const PosteriorEnsemble& ensemble, const LabeledSet& L,
                                             const Eigen::MatrixXd& D, const ParbalsConfig& config) {
  config.validate();
  const int m = config.universes();
  const auto pred = predict(ensemble, D);
  const Eigen::Index n = D.rows();
  const int c = ensemble.classes();

  PseudoLabelUniverses u;
  u.m = m;
  u.assignments.assign(static_cast<std::size_t>(m), std::vector<int>(static_cast<std::size_t>(n), 0));
  for (int i = 0; i < m; ++i) {
    auto& row = u.assignments[static_cast<std::size_t>(i)];
    if (config.variant == ParbalsVariant::map) {
      for (Eigen::Index x = 0; x < n; ++x) {
        Eigen::Index best = 0;
        pred.bma.row(x).maxCoeff(&best);
        row[static_cast<std::size_t>(x)] = static_cast<int>(best);
      }
      continue;
    }
    int weight_index = -1;
    if (config.coupling == UniverseCoupling::per_universe_weight) {
      Stream ws = Stream::make(config.seed, "universe-weight", config.iteration, i);
      weight_index = static_cast<int>(ws.index(static_cast<std::size_t>(ensemble.k())));
    }
    std::vector<double> probs(static_cast<std::size_t>(c));
    for (Eigen::Index x = 0; x < n; ++x) {
      for (int y = 0; y < c; ++y) {
        probs[static_cast<std::size_t>(y)] =
            weight_index < 0 ? pred.bma(x, y) : pred.tensor(weight_index, static_cast<int>(x), y);
      }
      Stream s = Stream::make(config.seed, "pseudo-label", config.iteration, i, x);
      row[static_cast<std::size_t>(x)] = s.categorical(probs);
    }
  }
  u.models.assign(static_cast<std::size_t>(m), ensemble);
  u.data.assign(static_cast<std::size_t>(m), L);
  return u;
}

/// EPIG scores per distinct pseudo-label history. Universes sharing a history
/// share a model, so each group is scored once.
struct UniverseScores {
  std::vector<std::size_t> group_of;         // universe -> group
  std::vector<std::size_t> group_size;       // universes per group
  std::vector<std::vector<double>> by_group; // group -> score per candidate

  double universe(std::size_t i, std::size_t candidate) const { return by_group[group_of[i]][candidate]; }

  /// Mean over universes as sum_g (|g| / m) * score_g, groups in order of
  /// first appearance; a single group returns its scores unchanged.
  std::vector<double> mean() const {
    const double m = static_cast<double>(group_of.size());
    std::vector<double> out(by_group.front().size(), 0.0);
    for (std::size_t g = 0; g < by_group.size(); ++g) {
      const double w = static_cast<double>(group_size[g]) / m;
      for (std::size_t x = 0; x < out.size(); ++x) out[x] += w * by_group[g][x];
    }
    return out;
  }
};

inline UniverseScores universe_scores(const PseudoLabelUniverses& u, const Eigen::MatrixXd& D,
                                      const Eigen::MatrixXd& V, const std::vector<std::size_t>& candidates) {
  std::map<std::vector<int>, std::size_t> key_of;
  std::vector<std::size_t> representative;
  UniverseScores out;
  out.group_of.resize(static_cast<std::size_t>(u.m));
  for (int i = 0; i < u.m; ++i) {
    std::vector<int> key;
    key.reserve(u.committed.size());
    for (auto s : u.committed) key.push_back(u.assignments[static_cast<std::size_t>(i)][s]);
    auto [it, inserted] = key_of.emplace(std::move(key), representative.size());
    if (inserted) {
      representative.push_back(static_cast<std::size_t>(i));
      out.group_size.push_back(0);
    }
    out.group_of[static_cast<std::size_t>(i)] = it->second;
    ++out.group_size[it->second];
  }
  const Eigen::MatrixXd Dc = select_rows(D, candidates);
  out.by_group.resize(representative.size());
  parallel_for(representative.size(), [&](std::size_t g) {
    const auto& model = u.models[representative[g]];
    out.by_group[g] = epig_scores(predict_tensor(model, Dc), predict_tensor(model, V)).values;
  });
  return out;
}

struct NextChoice {
  std::size_t position = 0;  // in D
  double mean_score = 0.0;
  std::vector<double> per_universe_scores;
};

/// Argmax of the universe-averaged EPIG over `remaining` (positions in D);
/// ties go to the lowest position.
inline NextChoice parbals_next(const PseudoLabelUniverses& u, const Eigen::MatrixXd& D, const Eigen::MatrixXd& V,
                               const std::vector<std::size_t>& remaining) {
  if (remaining.empty()) throw ValidationError("parbals: no remaining candidates");
  const auto scores = universe_scores(u, D, V, remaining);
  const auto mean = scores.mean();
  std::size_t best_col = 0;
  for (std::size_t col = 1; col < mean.size(); ++col) {
    if (mean[col] > mean[best_col] || (mean[col] == mean[best_col] && remaining[col] < remaining[best_col])) {
      best_col = col;
    }
  }
  NextChoice best;
  best.position = remaining[best_col];
  best.mean_score = mean[best_col];
  for (std::size_t i = 0; i < static_cast<std::size_t>(u.m); ++i) best.per_universe_scores.push_back(scores.universe(i, best_col));
  return best;
}

/// Commits D[position] and refits every universe with its own pseudo-label.
inline void parbals_commit(PseudoLabelUniverses& u, const Eigen::MatrixXd& D, std::size_t position,
                           const ParbalsConfig& config) {
  u.committed.push_back(position);
  const std::uint64_t seed = config.refit_seed();
  parallel_for(static_cast<std::size_t>(u.m), [&](std::size_t i) {
    try {
      const int label = u.assignments[i][position];
      LabeledSet extended;
      u.models[i] = refit_with(u.data[i], D.row(static_cast<Eigen::Index>(position)), label, config.prior, config.k, seed,
                               u.models[i].map, config.fit, &extended);
      u.data[i] = std::move(extended);
    } catch (const FitError& e) {
      throw FitError("universe " + std::to_string(i) + ": " + e.what(), e.grad_norm());
    } catch (const NumericalError& e) {
      throw NumericalError("universe " + std::to_string(i) + ": " + e.what());
    }
  });
  u.refits += static_cast<std::size_t>(u.m);
}

struct ParbalsTraceRecord {
  std::uint64_t iteration = 0;
  std::size_t step = 0;
  std::size_t chosen = 0;  // position in D
  double mean_score = 0.0;
  std::vector<double> per_universe_scores;
  std::vector<int> pseudo_labels;
};

struct ParbalsResult {
  std::vector<std::size_t> selected;  // positions in D, selection order
  std::vector<ParbalsTraceRecord> trace;
  std::size_t refits = 0;
};

/// Full batch construction. `V` is the whole validation set; it is
/// subsampled once per call with (seed, iteration) exactly as plain EPIG does.
inline ParbalsResult parbals_select(const PosteriorEnsemble& ensemble, const LabeledSet& L, const Eigen::MatrixXd& D,
                                    const Eigen::MatrixXd& V, const ParbalsConfig& config) {
  config.validate();
  if (config.B > static_cast<std::size_t>(D.rows())) throw ValidationError("parbals: batch size exceeds pool size");
  const auto val_rows = validation_subsample(static_cast<std::size_t>(V.rows()), config.val_subsample, config.seed,
                                             config.iteration);
  const Eigen::MatrixXd Vs = select_rows(V, val_rows);

  auto universes = sample_universes(ensemble, L, D, config);
  std::vector<std::size_t> remaining(static_cast<std::size_t>(D.rows()));
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;

  ParbalsResult out;
  for (std::size_t step = 0; step < config.B; ++step) {
    const auto choice = parbals_next(universes, D, Vs, remaining);
    ParbalsTraceRecord rec;
    rec.iteration = config.iteration;
    rec.step = step;
    rec.chosen = choice.position;
    rec.mean_score = choice.mean_score;
    rec.per_universe_scores = choice.per_universe_scores;
    for (const auto& a : universes.assignments) rec.pseudo_labels.push_back(a[choice.position]);
    out.trace.push_back(std::move(rec));
    out.selected.push_back(choice.position);
    std::erase(remaining, choice.position);
    parbals_commit(universes, D, choice.position, config);
  }
  out.refits = universes.refits;
  return out;
}

// ---------------------------------------------------------------------------
// Exact enumeration over pseudo-labels of the committed points

inline constexpr std::size_t kExactAssignmentCap = 256;

struct ExactObjective {
  std::vector<double> values;   // per position in D; NaN for committed points
  std::vector<double> weights;  // probability of each y_S assignment
};

/// E_{y_S ~ prod of BMA marginals}[mean_{x in V} I(Y_x; Y_xhat | Y_S = y_S, L)]
/// for every candidate, with a cold refit per assignment. Uses the same
/// normalization as epig_scores, so S = {} reproduces EPIG.
inline ExactObjective exact_parbals_objectives(const PosteriorEnsemble& ensemble, const LabeledSet& L,
                                               const Eigen::MatrixXd& D, const Eigen::MatrixXd& V,
                                               const std::vector<std::size_t>& S, const ParbalsConfig& config) {
  const int c = ensemble.classes();
  std::size_t n_assign = 1;
  for (std::size_t t = 0; t < S.size(); ++t) {
    n_assign *= static_cast<std::size_t>(c);
    if (n_assign > kExactAssignmentCap) throw ValidationError("exact ParBaLS objective: too many pseudo-label assignments");
  }
  const auto bma_S = predict(ensemble, select_rows(D, S)).bma;
  std::vector<std::size_t> candidates;
  for (std::size_t x = 0; x < static_cast<std::size_t>(D.rows()); ++x)
    if (std::find(S.begin(), S.end(), x) == S.end()) candidates.push_back(x);
  const Eigen::MatrixXd Dc = select_rows(D, candidates);

  ExactObjective out;
  out.weights.resize(n_assign);
  std::vector<std::vector<double>> scores(n_assign);
  parallel_for(n_assign, [&](std::size_t a) {
    LabeledSet ext = L;
    double w = 1.0;
    std::size_t code = a;
    for (std::size_t t = 0; t < S.size(); ++t) {
      const int y = static_cast<int>(code % static_cast<std::size_t>(c));
      code /= static_cast<std::size_t>(c);
      w *= bma_S(static_cast<Eigen::Index>(t), y);
      ext.append(D.row(static_cast<Eigen::Index>(S[t])), y);
    }
    out.weights[a] = w;
    const auto model = S.empty() ? ensemble : laplace_posterior(ext, config.prior, config.k, config.refit_seed(), config.fit);
    scores[a] = epig_scores(predict_tensor(model, Dc), predict_tensor(model, V)).values;
  });
  out.values.assign(static_cast<std::size_t>(D.rows()), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t x = 0; x < candidates.size(); ++x) {
    double total = 0.0;
    for (std::size_t a = 0; a < n_assign; ++a) total += out.weights[a] * scores[a][x];
    out.values[candidates[x]] = total;
  }
  return out;
}

inline double exact_parbals_objective(const PosteriorEnsemble& ensemble, const LabeledSet& L, const Eigen::MatrixXd& D,
                                      const Eigen::MatrixXd& V, const std::vector<std::size_t>& S, std::size_t candidate,
                                      const ParbalsConfig& config) {
  if (std::find(S.begin(), S.end(), candidate) != S.end()) throw ValidationError("candidate is already committed");
  return exact_parbals_objectives(ensemble, L, D, V, S, config).values.at(candidate);
}

}  // namespace parbals
