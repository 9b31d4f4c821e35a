#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

#include "parbals/bait.hpp"
#include "parbals/oracle.hpp"

using namespace parbals;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

struct Problem {
  oracle::ToyProblem tp;
  WeightPoint map;
};

Problem make_problem(std::uint64_t seed, int c, int d, std::size_t n_labeled, std::size_t n_pool) {
  Problem p;
  p.tp = oracle::random_toy_problem(c, d, n_labeled, n_pool, 1, 2.0, Stream::make(seed, "bait-test"));
  p.map = map_fit(p.tp.L, Prior{}).point;
  return p;
}

Eigen::MatrixXd dense_A(const WeightPoint& w, const Eigen::MatrixXd& X, double precision) {
  const auto P = param_count(w.classes(), w.dim());
  Eigen::MatrixXd A = precision * Eigen::MatrixXd::Identity(P, P);
  for (Eigen::Index i = 0; i < X.rows(); ++i) A += oracle::fisher_block_dense(w, X.row(i));
  return A;
}

}  // namespace

TEST(BaitObjective, EqualMatricesGiveParameterCount) {
  Stream s = Stream::make(1);
  for (int P : {3, 6, 12}) {
    const Eigen::MatrixXd A = oracle::random_spd(P, s);
    EXPECT_NEAR(bait_objective({A, A, {}}), P, 1e-9);
  }
}

TEST(BaitObjective, ZeroPoolHessianGivesZero) {
  Stream s = Stream::make(2);
  const Eigen::MatrixXd A = oracle::random_spd(6, s);
  EXPECT_EQ(bait_objective({A, Eigen::MatrixXd::Zero(6, 6), {}}), 0.0);
}

TEST(BaitObjective, PositiveForNonzeroPsdG) {
  Stream s = Stream::make(3);
  const Eigen::MatrixXd A = oracle::random_spd(5, s);
  const Eigen::VectorXd v = oracle::random_matrix(5, 1, s);
  EXPECT_GT(bait_objective({A, v * v.transpose(), {}}), 0.0);
}

TEST(BaitObjective, MatchesDenseInverseOnSmallInstance) {
  // c = 2, d = 2, |L| = 2, |D| = 3
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = make_problem(seed, 2, 2, 2, 3);
    const auto st = bait_initial_state(p.map, p.tp.L.X, p.tp.D, Prior{});
    const Eigen::MatrixXd A = dense_A(p.map, p.tp.L.X, 1.0);
    const Eigen::MatrixXd G = dense_A(p.map, p.tp.D, 0.0);
    EXPECT_LE((st.A - A).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((st.G - G).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(rel_err(bait_objective(st), oracle::bait_objective_dense(A, G)), 1e-8);
  }
}

TEST(BaitObjective, MatchesDenseOnRandomSpd) {
  Stream s = Stream::make(4);
  for (int inst = 0; inst < 50; ++inst) {
    const int P = 2 + static_cast<int>(s.index(10));
    const Eigen::MatrixXd A = oracle::random_spd(P, s);
    const Eigen::MatrixXd G = oracle::random_spd(P, s);
    EXPECT_LE(rel_err(bait_objective({A, G, {}}), oracle::bait_objective_dense(A, G)), 1e-8);
  }
}

TEST(BaitObjective, IllConditionedThrows) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
  A(2, 2) = 1e-13;
  try {
    bait_objective({A, Eigen::MatrixXd::Identity(3, 3), {}});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("prior"), std::string::npos);
  }
  A(2, 2) = 1e-11;
  EXPECT_NO_THROW(bait_objective({A, Eigen::MatrixXd::Identity(3, 3), {}}));
}

TEST(FisherFactor, ReproducesDenseBlock) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Stream s = Stream::make(seed, "ff");
    const int c = 2 + static_cast<int>(s.index(3)), d = 1 + static_cast<int>(s.index(4));
    const WeightPoint w = WeightPoint::from_flat(oracle::random_matrix(param_count(c, d), 1, s), c, d);
    const Eigen::RowVectorXd x = oracle::random_matrix(1, d, s);
    const Eigen::MatrixXd U = fisher_factor(softmax_probs(w, x), x);
    EXPECT_LE((U * U.transpose() - oracle::fisher_block_dense(w, x)).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Woodbury, AgreesWithDenseInverseOverTwentyUpdates) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Stream s = Stream::make(seed, "woodbury");
    const int P = 12, c = 3;
    Eigen::MatrixXd A = oracle::random_spd(P, s);
    Eigen::MatrixXd Ainv = oracle::gauss_jordan_inverse(A);
    for (int u = 0; u < 20; ++u) {
      const Eigen::MatrixXd U = oracle::random_matrix(P, c, s);
      woodbury_update(Ainv, U);
      A += U * U.transpose();
    }
    const Eigen::MatrixXd ref = oracle::gauss_jordan_inverse(A);
    EXPECT_LE((Ainv - ref).norm() / ref.norm(), 1e-8);
  }
}

TEST(BaitGreedy, MatchesDenseRecomputation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = make_problem(100 + seed, 2 + static_cast<int>(seed % 2), 2, 6, 10);
    const auto fast = bait_greedy(p.map, p.tp.L.X, p.tp.D, 5, Prior{});
    const auto slow = oracle::bait_greedy_dense(p.map, p.tp.L.X, p.tp.D, 5, Prior{});
    EXPECT_EQ(fast.selected, slow.selected);
    EXPECT_LE(rel_err(fast.initial_objective, slow.initial_objective), 1e-8);
    for (std::size_t s = 0; s < 5; ++s) EXPECT_LE(rel_err(fast.objectives[s], slow.objectives[s]), 1e-8);
  }
}

TEST(BaitGreedy, ObjectiveNonIncreasing) {
  auto p = make_problem(200, 3, 4, 10, 40);
  const auto r = bait_greedy(p.map, p.tp.L.X, p.tp.D, 15, Prior{});
  double prev = r.initial_objective;
  for (double v : r.objectives) {
    EXPECT_LE(v, prev + 1e-12);
    prev = v;
  }
}

TEST(BaitGreedy, EmptyBatch) {
  auto p = make_problem(201, 2, 2, 4, 5);
  const auto r = bait_greedy(p.map, p.tp.L.X, p.tp.D, 0, Prior{});
  EXPECT_TRUE(r.selected.empty());
  EXPECT_TRUE(r.objectives.empty());
}

TEST(BaitGreedy, RejectsOversizedBatch) {
  auto p = make_problem(202, 2, 2, 4, 5);
  EXPECT_THROW(bait_greedy(p.map, p.tp.L.X, p.tp.D, 6, Prior{}), ValidationError);
}

TEST(BaitGreedy, DistinctSelections) {
  auto p = make_problem(203, 2, 3, 4, 12);
  const auto r = bait_greedy(p.map, p.tp.L.X, p.tp.D, 12, Prior{});
  EXPECT_EQ(std::set<std::size_t>(r.selected.begin(), r.selected.end()).size(), 12u);
}

TEST(BaitGreedy, TiesGoToLowestPosition) {
  auto p = make_problem(204, 2, 2, 4, 3);
  Eigen::MatrixXd pool(4, 2);
  pool << p.tp.D.row(1), p.tp.D.row(1), p.tp.D.row(1), p.tp.D.row(1);
  EXPECT_EQ(bait_greedy(p.map, p.tp.L.X, pool, 1, Prior{}).selected[0], 0u);
}

TEST(BaitGreedy, LabelsDoNotEnter) {
  // At a fixed weight point the criterion only sees features.
  auto p = make_problem(205, 3, 2, 8, 10);
  LabeledSet relabeled = p.tp.L;
  for (auto& y : relabeled.y) y = (y + 1) % 3;
  const auto a = bait_greedy(p.map, p.tp.L.X, p.tp.D, 4, Prior{});
  const auto b = bait_greedy(p.map, relabeled.X, p.tp.D, 4, Prior{});
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_EQ(a.objectives, b.objectives);
}

TEST(BaitGreedy, DuplicateHighLeveragePointHelpsZeroInformationPointDoesNot) {
  auto p = make_problem(206, 2, 2, 4, 8);
  auto st = bait_initial_state(p.map, p.tp.L.X, p.tp.D, Prior{});
  const double base = bait_objective(st);

  // the highest-leverage pool point, duplicated into A
  const auto first = bait_greedy(p.map, p.tp.L.X, p.tp.D, 1, Prior{});
  const Eigen::RowVectorXd hx = p.tp.D.row(static_cast<Eigen::Index>(first.selected[0]));
  BaitState dup = st;
  dup.A += oracle::fisher_block_dense(p.map, hx);
  EXPECT_LT(bait_objective(dup), base);

  // a point whose predictive distribution is one-hot carries zero Fisher information
  WeightPoint sharp = p.map;
  sharp.b(0) = 1e4;
  const Eigen::RowVectorXd x0 = Eigen::RowVectorXd::Zero(2);
  const Eigen::MatrixXd U = fisher_factor(softmax_probs(sharp, x0), x0);
  EXPECT_EQ(U.cwiseAbs().maxCoeff(), 0.0);
  BaitState same = st;
  same.A += U * U.transpose();
  EXPECT_NEAR(bait_objective(same), base, 1e-12);
}

TEST(BaitGreedy, ThreadCountDoesNotChangeResult) {
  auto p = make_problem(207, 3, 3, 6, 30);
  setenv("PARBALS_THREADS", "1", 1);
  const auto a = bait_greedy(p.map, p.tp.L.X, p.tp.D, 6, Prior{});
  setenv("PARBALS_THREADS", "4", 1);
  const auto b = bait_greedy(p.map, p.tp.L.X, p.tp.D, 6, Prior{});
  unsetenv("PARBALS_THREADS");
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_EQ(a.objectives, b.objectives);
}

TEST(PoolHessianSubsample, DefaultAndFullSizeUseEveryRow) {
  auto p = make_problem(208, 2, 2, 4, 20);
  const Eigen::MatrixXd full = hessian(p.tp.D, p.map, Prior{}, false);
  EXPECT_EQ(pool_hessian(p.map, p.tp.D), full);
  EXPECT_EQ(pool_hessian(p.map, p.tp.D, BaitOptions{20, 3}), full);
}

TEST(PoolHessianSubsample, ScaledToPoolSize) {
  // identical rows: any subsample scaled by n/size reproduces the full sum
  auto p = make_problem(209, 3, 2, 4, 1);
  const Eigen::MatrixXd pool = p.tp.D.replicate(30, 1);
  const Eigen::MatrixXd full = hessian(pool, p.map, Prior{}, false);
  const Eigen::MatrixXd sub = pool_hessian(p.map, pool, BaitOptions{7, 1});
  EXPECT_LE((sub - full).cwiseAbs().maxCoeff(), 1e-12 * full.cwiseAbs().maxCoeff());
}

TEST(PoolHessianSubsample, SeededSubsetOfRows) {
  auto p = make_problem(210, 2, 2, 4, 50);
  const auto a = pool_hessian(p.map, p.tp.D, BaitOptions{10, 4});
  EXPECT_EQ(a, pool_hessian(p.map, p.tp.D, BaitOptions{10, 4}));
  EXPECT_NE(a, pool_hessian(p.map, p.tp.D, BaitOptions{10, 5}));
  const auto r = bait_greedy(p.map, p.tp.L.X, p.tp.D, 3, Prior{}, BaitOptions{10, 4});
  EXPECT_EQ(r.selected.size(), 3u);
}
