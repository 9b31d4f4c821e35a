#pragma once

// BAIT: choose S to minimize Tr([H_{L u S}(w_L)]^-1 H_D(w_L)), the V-optimal
// design criterion, greedily. Hessians are label-free Fisher matrices at the
// MAP point; the prior precision keeps A invertible.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "parbals/bayes_linear.hpp"
#include "parbals/error.hpp"
#include "parbals/parallel.hpp"
#include "parbals/rng.hpp"

namespace parbals {

inline constexpr double kBaitConditionLimit = 1e12;

struct BaitState {
  Eigen::MatrixXd A;  // H_{L u S}(w_L) + I / sigma^2
  Eigen::MatrixXd G;  // H_D(w_L)
  std::vector<std::size_t> chosen;
};

/// Tr(A^-1 G). Throws when A is numerically singular (condition number > 1e12).
inline double bait_objective(const BaitState& state) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(state.A, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kBaitConditionLimit) {
    throw NumericalError("BAIT: candidate Hessian is near-singular (condition number > 1e12); increase the prior variance's precision");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(state.A);
  return llt.solve(state.G).trace();
}

/// Factor U (P x c) with U U^T = (diag(p) - p p^T) (x) [x;1][x;1]^T, using
/// diag(p) - p p^T = V V^T for V = diag(sqrt p) - p sqrt(p)^T.
inline Eigen::MatrixXd fisher_factor(const Eigen::Ref<const Eigen::RowVectorXd>& p,
                                     const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const Eigen::Index c = p.size(), w = x.size() + 1;
  Eigen::VectorXd xt(w);
  xt << x.transpose(), 1.0;
  const Eigen::RowVectorXd sq = p.cwiseSqrt();
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(c * w, c);
  for (Eigen::Index a = 0; a < c; ++a)
    for (Eigen::Index b = 0; b < c; ++b) {
      const double v = (a == b ? sq(a) : 0.0) - p(a) * sq(b);
      U.block(a * w, b, w, 1) = v * xt;
    }
  return U;
}

struct BaitOptions {
  // Estimate G from this many pool rows (scaled up to the full pool); 0 uses every row.
  std::size_t g_subsample = 0;
  std::uint64_t seed = 0;
};

inline Eigen::MatrixXd pool_hessian(const WeightPoint& map, const Eigen::MatrixXd& pool, const BaitOptions& opt = {}) {
  const auto n = static_cast<std::size_t>(pool.rows());
  if (opt.g_subsample == 0 || opt.g_subsample >= n) return hessian(pool, map, Prior{}, false);
  auto rows = sample_without_replacement(n, opt.g_subsample, Stream::make(opt.seed, "bait-g-subsample"));
  std::sort(rows.begin(), rows.end());
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), pool.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = pool.row(static_cast<Eigen::Index>(rows[r]));
  return hessian(sub, map, Prior{}, false) * (static_cast<double>(n) / static_cast<double>(rows.size()));
}

inline BaitState bait_initial_state(const WeightPoint& map, const Eigen::MatrixXd& labeled, const Eigen::MatrixXd& pool,
                                    const Prior& prior, const BaitOptions& opt = {}) {
  return {hessian(labeled, map, prior, true), pool_hessian(map, pool, opt), {}};
}

/// (A + U U^T)^-1 from A^-1 by the Woodbury identity, symmetrized.
inline void woodbury_update(Eigen::MatrixXd& Ainv, const Eigen::MatrixXd& U) {
  const Eigen::MatrixXd K = Ainv * U;
  const Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(U.cols(), U.cols()) + U.transpose() * K;
  Ainv -= K * inner.ldlt().solve(K.transpose());
  Ainv = 0.5 * (Ainv + Ainv.transpose()).eval();
}

struct BaitResult {
  std::vector<std::size_t> selected;  // positions in the pool, selection order
  std::vector<double> objectives;     // objective after each step
  double initial_objective = 0.0;
};

/// Greedy selection. A^-1 is maintained through rank-c Woodbury updates:
/// Tr((A + U U^T)^-1 G) = Tr(A^-1 G) - Tr((I + U^T K)^-1 K^T G K), K = A^-1 U.
/// Ties go to the lowest position.
inline BaitResult bait_greedy(const WeightPoint& map, const Eigen::MatrixXd& labeled, const Eigen::MatrixXd& pool,
                              std::size_t B, const Prior& prior, const BaitOptions& opt = {}) {
  if (B > static_cast<std::size_t>(pool.rows())) throw ValidationError("BAIT: batch size exceeds pool size");
  BaitState state = bait_initial_state(map, labeled, pool, prior, opt);
  BaitResult out;
  out.initial_objective = bait_objective(state);
  if (B == 0) return out;

  const Eigen::MatrixXd probs = softmax_probs(map, pool);
  const Eigen::Index n = pool.rows();
  const Eigen::Index c = map.classes();
  std::vector<Eigen::MatrixXd> factors(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) factors[static_cast<std::size_t>(i)] = fisher_factor(probs.row(i), pool.row(i));

  Eigen::MatrixXd Ainv = state.A.llt().solve(Eigen::MatrixXd::Identity(state.A.rows(), state.A.cols()));
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(c, c);

  for (std::size_t step = 0; step < B; ++step) {
    std::vector<double> reduction(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      if (taken[i]) return;
      const Eigen::MatrixXd& U = factors[i];
      const Eigen::MatrixXd K = Ainv * U;
      const Eigen::MatrixXd inner = I + U.transpose() * K;
      reduction[i] = inner.ldlt().solve(K.transpose() * state.G * K).trace();
    });
    std::size_t best = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i < reduction.size(); ++i) {
      if (taken[i]) continue;
      if (best == static_cast<std::size_t>(n) || reduction[i] > reduction[best]) best = i;
    }
    const Eigen::MatrixXd& U = factors[best];
    woodbury_update(Ainv, U);
    state.A += U * U.transpose();
    state.chosen.push_back(best);
    taken[best] = true;
    out.selected.push_back(best);
    out.objectives.push_back((Ainv * state.G).trace());
  }
  return out;
}

}  // namespace parbals
