#pragma once

// Acquisition scores computed from a PredictiveTensor, and batch selection
// rules. All information quantities use natural logarithms.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "parbals/bayes_linear.hpp"
#include "parbals/error.hpp"
#include "parbals/parallel.hpp"
#include "parbals/rng.hpp"

namespace parbals {

enum class ScoreKind { confidence, bald, epig, bait_marginal };

inline const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::confidence: return "confidence";
    case ScoreKind::bald: return "bald";
    case ScoreKind::epig: return "epig";
    case ScoreKind::bait_marginal: return "bait-marginal";
  }
  return "?";
}

struct Scores {
  std::vector<double> values;  // one per candidate, in candidate order
  ScoreKind kind = ScoreKind::epig;

  std::size_t size() const { return values.size(); }
};

inline double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

/// -sum p ln p, with 0 ln 0 = 0.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= xlogx(v);
  return std::max(h, 0.0);
}

inline double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  return entropy(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

/// Least confidence: 1 - max_y p[y].
inline double confidence_score(const Eigen::Ref<const Eigen::RowVectorXd>& bma_row) { return 1.0 - bma_row.maxCoeff(); }

inline Scores confidence_scores(const Eigen::MatrixXd& bma) {
  Scores s{std::vector<double>(static_cast<std::size_t>(bma.rows())), ScoreKind::confidence};
  for (Eigen::Index i = 0; i < bma.rows(); ++i) s.values[static_cast<std::size_t>(i)] = confidence_score(bma.row(i));
  return s;
}

/// k x n matrix of per-sample predictive entropies.
inline Eigen::MatrixXd sample_entropies(const PredictiveTensor& t) {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(t.k, t.n);
  for (int y = 0; y < t.c; ++y) H -= t.probs[static_cast<std::size_t>(y)].unaryExpr([](double p) { return xlogx(p); });
  return H;
}

/// Plug-in BALD: H(mean_j p_j) - mean_j H(p_j).
inline double bald_score(const PredictiveTensor& t, int i) {
  Eigen::RowVectorXd mean(t.c);
  double cond = 0.0;
  for (int y = 0; y < t.c; ++y) mean(y) = t.probs[static_cast<std::size_t>(y)].col(i).mean();
  for (int j = 0; j < t.k; ++j) {
    double h = 0.0;
    for (int y = 0; y < t.c; ++y) h -= xlogx(t(j, i, y));
    cond += h;
  }
  return std::max(entropy(mean) - cond / t.k, 0.0);
}

inline Scores bald_scores(const PredictiveTensor& t) {
  Scores s{std::vector<double>(static_cast<std::size_t>(t.n)), ScoreKind::bald};
  for (int i = 0; i < t.n; ++i) s.values[static_cast<std::size_t>(i)] = bald_score(t, i);
  return s;
}

/// Plug-in joint p(y, yhat) = (1/k) sum_j p_j(y | x) p_j(yhat | xhat); rows index y.
inline Eigen::MatrixXd pairwise_joint(const PredictiveTensor& tx, int x, const PredictiveTensor& txh, int xh) {
  if (tx.k != txh.k) throw ValidationError("pairwise joint needs tensors from the same ensemble");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(tx.c, txh.c);
  for (int j = 0; j < tx.k; ++j)
    for (int y = 0; y < tx.c; ++y)
      for (int yh = 0; yh < txh.c; ++yh) J(y, yh) += tx(j, x, y) * txh(j, xh, yh);
  return J / tx.k;
}

/// Mutual information of a joint table, marginals taken from the table itself.
inline double mutual_information(const Eigen::MatrixXd& J) {
  const Eigen::VectorXd p = J.rowwise().sum();
  const Eigen::RowVectorXd q = J.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index a = 0; a < J.rows(); ++a)
    for (Eigen::Index b = 0; b < J.cols(); ++b)
      if (J(a, b) > 0.0) mi += J(a, b) * std::log(J(a, b) / (p(a) * q(b)));
  return std::max(mi, 0.0);
}

inline double pairwise_mi(const PredictiveTensor& tx, int x, const PredictiveTensor& txh, int xh) {
  return mutual_information(pairwise_joint(tx, x, txh, xh));
}

inline double pairwise_mi(const PredictiveTensor& t, int a, int b) { return pairwise_mi(t, a, t, b); }

/// EPIG for every pool point: mean over validation points x of I(Y_x; Y_xhat).
/// Joints for all (x, xhat) pairs come from c^2 matrix products over fixed
/// 64-column pool chunks; chunking is independent of the worker count.
inline Scores epig_scores(const PredictiveTensor& pool, const PredictiveTensor& val) {
  if (pool.k != val.k || pool.c != val.c) throw ValidationError("epig: tensors from different ensembles");
  if (val.n == 0) throw ValidationError("epig: empty validation set");
  constexpr int chunk = 64;
  const int c = pool.c;
  const double inv_k = 1.0 / pool.k;
  Scores out{std::vector<double>(static_cast<std::size_t>(pool.n), 0.0), ScoreKind::epig};
  const std::size_t n_chunks = static_cast<std::size_t>((pool.n + chunk - 1) / chunk);

  parallel_for(n_chunks, [&](std::size_t ci) {
    const int start = static_cast<int>(ci) * chunk;
    const int width = std::min(chunk, pool.n - start);
    std::vector<Eigen::MatrixXd> J(static_cast<std::size_t>(c * c));
    for (int y = 0; y < c; ++y)
      for (int yh = 0; yh < c; ++yh)
        J[static_cast<std::size_t>(y * c + yh)].noalias() =
            val.probs[static_cast<std::size_t>(y)].transpose() *
            pool.probs[static_cast<std::size_t>(yh)].middleCols(start, width) * inv_k;
    std::vector<double> p(static_cast<std::size_t>(c)), q(static_cast<std::size_t>(c));
    for (int col = 0; col < width; ++col) {
      double total = 0.0;
      for (int v = 0; v < val.n; ++v) {
        std::fill(p.begin(), p.end(), 0.0);
        std::fill(q.begin(), q.end(), 0.0);
        for (int y = 0; y < c; ++y)
          for (int yh = 0; yh < c; ++yh) {
            const double jv = J[static_cast<std::size_t>(y * c + yh)](v, col);
            p[static_cast<std::size_t>(y)] += jv;
            q[static_cast<std::size_t>(yh)] += jv;
          }
        double mi = 0.0;
        for (int y = 0; y < c; ++y)
          for (int yh = 0; yh < c; ++yh) {
            const double jv = J[static_cast<std::size_t>(y * c + yh)](v, col);
            if (jv > 0.0) mi += jv * std::log(jv / (p[static_cast<std::size_t>(y)] * q[static_cast<std::size_t>(yh)]));
          }
        total += std::max(mi, 0.0);
      }
      out.values[static_cast<std::size_t>(start + col)] = total / val.n;
    }
  });
  return out;
}

/// Uniform subsample without replacement of the validation set, fresh per
/// iteration; the identity when `size >= n_val`.
inline std::vector<std::size_t> validation_subsample(std::size_t n_val, std::size_t size, std::uint64_t seed,
                                                     std::uint64_t iteration) {
  if (size >= n_val) {
    std::vector<std::size_t> all(n_val);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  auto idx = sample_without_replacement(n_val, size, Stream::make(seed, "val-subsample", iteration));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

/// EPIG of a single candidate against a (possibly subsampled) validation set.
inline double epig_score(const PosteriorEnsemble& e, const Eigen::Ref<const Eigen::RowVectorXd>& candidate,
                         const Eigen::MatrixXd& validation, std::size_t val_subsample, std::uint64_t seed,
                         std::uint64_t iteration = 0) {
  if (validation.rows() == 0) throw ValidationError("epig: empty validation set");
  const auto rows = validation_subsample(static_cast<std::size_t>(validation.rows()), val_subsample, seed, iteration);
  const auto tv = predict_tensor(e, select_rows(validation, rows));
  const auto tc = predict_tensor(e, Eigen::MatrixXd(candidate));
  return epig_scores(tc, tv).values.front();
}

// ---------------------------------------------------------------------------
// BatchBALD

inline constexpr std::size_t kJointCap = 4096;

namespace detail {

inline std::size_t config_count(int c, std::size_t points, std::size_t cap) {
  std::size_t n = 1;
  for (std::size_t t = 0; t < points; ++t) {
    n *= static_cast<std::size_t>(c);
    if (n > cap) {
      throw ValidationError("BatchBALD joint over " + std::to_string(points) + " points exceeds " +
                            std::to_string(cap) +
                            " label configurations; use ParBaLS for large batches");
    }
  }
  return n;
}

}  // namespace detail

/// Plug-in I(Y_batch; W): entropy of the mean joint over all label
/// configurations minus the mean per-sample sum of marginal entropies.
inline double batchbald_joint_mi(const PredictiveTensor& t, const std::vector<int>& batch,
                                 std::size_t cap = kJointCap) {
  detail::config_count(t.c, batch.size(), cap);
  Eigen::MatrixXd table = Eigen::MatrixXd::Ones(t.k, 1);
  for (int i : batch) {
    Eigen::MatrixXd next(t.k, table.cols() * t.c);
    for (Eigen::Index s = 0; s < table.cols(); ++s)
      for (int y = 0; y < t.c; ++y) next.col(s * t.c + y) = table.col(s).cwiseProduct(t.probs[static_cast<std::size_t>(y)].col(i));
    table = std::move(next);
  }
  double joint_h = 0.0;
  for (Eigen::Index s = 0; s < table.cols(); ++s) joint_h -= xlogx(table.col(s).mean());
  const Eigen::MatrixXd H = sample_entropies(t);
  double cond = 0.0;
  for (int i : batch) cond += H.col(i).mean();
  return std::max(joint_h - cond, 0.0);
}

struct GreedyBatch {
  std::vector<std::size_t> selected;  // candidate positions in selection order
  std::vector<double> gains;          // objective value after each step
};

/// Greedy BatchBALD over all tensor columns.
inline GreedyBatch select_batchbald(const PredictiveTensor& t, std::size_t B, std::size_t cap = kJointCap) {
  if (B > static_cast<std::size_t>(t.n)) throw ValidationError("batch size exceeds pool size");
  detail::config_count(t.c, B, cap);
  const Eigen::MatrixXd H = sample_entropies(t);
  const Eigen::RowVectorXd mean_h = H.colwise().mean();
  Eigen::MatrixXd table = Eigen::MatrixXd::Ones(t.k, 1);
  std::vector<bool> taken(static_cast<std::size_t>(t.n), false);
  double cond = 0.0;
  GreedyBatch out;
  constexpr int chunk = 256;
  for (std::size_t step = 0; step < B; ++step) {
    std::vector<double> score(static_cast<std::size_t>(t.n), -1.0);
    const std::size_t n_chunks = static_cast<std::size_t>((t.n + chunk - 1) / chunk);
    parallel_for(n_chunks, [&](std::size_t ci) {
      const int start = static_cast<int>(ci) * chunk;
      const int width = std::min(chunk, t.n - start);
      Eigen::VectorXd joint_h = Eigen::VectorXd::Zero(width);
      for (int y = 0; y < t.c; ++y) {
        const Eigen::MatrixXd M = table.transpose() * t.probs[static_cast<std::size_t>(y)].middleCols(start, width) / t.k;
        for (int col = 0; col < width; ++col)
          for (Eigen::Index s = 0; s < M.rows(); ++s) joint_h(col) -= xlogx(M(s, col));
      }
      for (int col = 0; col < width; ++col)
        score[static_cast<std::size_t>(start + col)] = std::max(joint_h(col) - cond - mean_h(start + col), 0.0);
    });
    std::size_t best = static_cast<std::size_t>(t.n);
    for (std::size_t i = 0; i < score.size(); ++i) {
      if (taken[i]) continue;
      if (best == static_cast<std::size_t>(t.n) || score[i] > score[best]) best = i;
    }
    taken[best] = true;
    out.selected.push_back(best);
    out.gains.push_back(score[best]);
    Eigen::MatrixXd next(t.k, table.cols() * t.c);
    for (Eigen::Index s = 0; s < table.cols(); ++s)
      for (int y = 0; y < t.c; ++y)
        next.col(s * t.c + y) = table.col(s).cwiseProduct(t.probs[static_cast<std::size_t>(y)].col(static_cast<Eigen::Index>(best)));
    table = std::move(next);
    cond += mean_h(static_cast<Eigen::Index>(best));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch selection rules

/// The B highest scores, sorted by descending score; ties go to the lower index.
inline std::vector<std::size_t> select_top_b(const std::vector<double>& scores, std::size_t B) {
  if (B > scores.size()) throw ValidationError("batch size exceeds pool size");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(B);
  return order;
}

inline std::vector<std::size_t> select_top_b(const Scores& scores, std::size_t B) { return select_top_b(scores.values, B); }

enum class StochasticVariant { power, softmax, softrank };

inline const char* to_string(StochasticVariant v) {
  switch (v) {
    case StochasticVariant::power: return "power";
    case StochasticVariant::softmax: return "softmax";
    case StochasticVariant::softrank: return "softrank";
  }
  return "?";
}

struct StochasticOptions {
  StochasticVariant variant = StochasticVariant::power;
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  bool noise_free = false;  // the beta -> infinity limit
};

/// Perturbed keys: power ln s + g/beta, softmax s + g/beta, softrank
/// -ln(rank) + g/beta (rank 1 = best). g is standard Gumbel drawn from
/// stream (seed, "gumbel", iteration, point_id).
inline std::vector<double> stochastic_keys(const std::vector<double>& scores, const std::vector<std::size_t>& point_ids,
                                           const StochasticOptions& opt) {
  if (!(opt.beta > 0.0)) throw ValidationError("beta must be positive");
  if (point_ids.size() != scores.size()) throw ValidationError("point ids must match scores");
  std::vector<double> base(scores.size());
  switch (opt.variant) {
    case StochasticVariant::power: {
      bool clamped = false;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        double s = scores[i];
        if (s < 1e-12) {
          s = 1e-12;
          clamped = true;
        }
        base[i] = std::log(s);
      }
      if (clamped) warn("power acquisition: non-positive scores clamped to 1e-12");
      break;
    }
    case StochasticVariant::softmax:
      base = scores;
      break;
    case StochasticVariant::softrank: {
      const auto order = select_top_b(scores, scores.size());
      for (std::size_t r = 0; r < order.size(); ++r) base[order[r]] = -std::log(static_cast<double>(r + 1));
      break;
    }
  }
  if (!opt.noise_free) {
    for (std::size_t i = 0; i < base.size(); ++i) {
      Stream g = Stream::make(opt.seed, "gumbel", opt.iteration, point_ids[i]);
      base[i] += g.gumbel() / opt.beta;
    }
  }
  return base;
}

inline std::vector<std::size_t> select_stochastic(const std::vector<double>& scores, std::size_t B,
                                                  const std::vector<std::size_t>& point_ids,
                                                  const StochasticOptions& opt) {
  if (B > scores.size()) throw ValidationError("batch size exceeds pool size");
  return select_top_b(stochastic_keys(scores, point_ids, opt), B);
}

// ---------------------------------------------------------------------------
// Score dumps

inline void write_scores_header(std::ostream& out) { out << "point_id,score,kind,iteration\n"; }

inline void write_scores_csv(std::ostream& out, const std::vector<std::size_t>& point_ids, const Scores& scores,
                             std::uint64_t iteration) {
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << point_ids[i] << ',' << scores.values[i] << ',' << to_string(scores.kind) << ',' << iteration << '\n';
  }
  out.precision(old_precision);
}

}  // namespace parbals
