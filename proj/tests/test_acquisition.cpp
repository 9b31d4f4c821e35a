#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "parbals/acquisition.hpp"
#include "parbals/oracle.hpp"

using namespace parbals;

namespace {

PredictiveTensor tensor_from(const std::vector<std::vector<std::vector<double>>>& rows) {
  // rows[j][i] = class probabilities of point i under sample j
  PredictiveTensor t;
  t.k = static_cast<int>(rows.size());
  t.n = static_cast<int>(rows[0].size());
  t.c = static_cast<int>(rows[0][0].size());
  t.probs.assign(t.c, Eigen::MatrixXd(t.k, t.n));
  for (int j = 0; j < t.k; ++j)
    for (int i = 0; i < t.n; ++i)
      for (int y = 0; y < t.c; ++y) t.probs[y](j, i) = rows[j][i][y];
  for (int i = 0; i < t.n; ++i) t.point_ids.push_back(i);
  return t;
}

PredictiveTensor random_tensor(int k, int n, int c, std::uint64_t seed) {
  Stream s = Stream::make(seed, "acq-test");
  return oracle::random_tensor(k, n, c, s);
}

// Concatenates the columns of two tensors that share k and c.
PredictiveTensor concat(const PredictiveTensor& a, const PredictiveTensor& b) {
  PredictiveTensor t = a;
  t.n = a.n + b.n;
  for (int y = 0; y < a.c; ++y) {
    t.probs[y].resize(a.k, t.n);
    t.probs[y] << a.probs[y], b.probs[y];
  }
  t.point_ids.resize(t.n);
  std::iota(t.point_ids.begin(), t.point_ids.end(), std::size_t{0});
  return t;
}

}  // namespace

// ---- entropy / confidence / BALD --------------------------------------------

TEST(Entropy, Examples) {
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-15);
  EXPECT_EQ(entropy(std::vector<double>{1.0, 0.0}), 0.0);
  // -(0.9 ln 0.9 + 0.1 ln 0.1)
  EXPECT_NEAR(entropy(std::vector<double>{0.9, 0.1}), 0.325083, 1e-6);
}

TEST(Entropy, BoundedByLogC) {
  auto t = random_tensor(1, 200, 5, 1);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> p(5);
    for (int y = 0; y < 5; ++y) p[y] = t(0, i, y);
    const double h = entropy(p);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(5.0) + 1e-12);
  }
}

TEST(Confidence, Examples) {
  EXPECT_NEAR(confidence_score(Eigen::RowVectorXd::Constant(4, 0.25)), 0.75, 1e-15);
  EXPECT_EQ(confidence_score((Eigen::RowVectorXd(3) << 1, 0, 0).finished()), 0.0);
}

TEST(Confidence, DuplicatesDoNotChangeArgmax) {
  Eigen::MatrixXd bma(3, 2);
  bma << 0.9, 0.1, 0.55, 0.45, 0.7, 0.3;
  Eigen::MatrixXd dup(5, 2);
  dup << bma, bma.row(1), bma.row(1);
  EXPECT_EQ(select_top_b(confidence_scores(bma), 1), std::vector<std::size_t>{1});
  EXPECT_EQ(select_top_b(confidence_scores(dup), 1), std::vector<std::size_t>{1});
}

TEST(Bald, SingleSampleIsZero) {
  auto t = random_tensor(1, 10, 3, 2);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(bald_score(t, i), 0.0, 1e-15);
}

TEST(Bald, OppositeCertainSamplesGiveLn2) {
  auto t = tensor_from({{{1, 0}}, {{0, 1}}});
  EXPECT_NEAR(bald_score(t, 0), std::log(2.0), 1e-15);
}

TEST(Bald, AgreeingSamplesGiveZero) {
  auto t = tensor_from({{{0.3, 0.7}}, {{0.3, 0.7}}, {{0.3, 0.7}}});
  EXPECT_NEAR(bald_score(t, 0), 0.0, 1e-15);
}

TEST(Bald, RangeOnRandomTensors) {
  auto t = random_tensor(20, 50, 4, 3);
  auto s = bald_scores(t);
  EXPECT_EQ(s.kind, ScoreKind::bald);
  for (double v : s.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, std::log(4.0));
  }
}

// ---- pairwise MI --------------------------------------------------------------

TEST(PairwiseMi, IdenticalSamplesGiveZero) {
  auto t = tensor_from({{{0.2, 0.8}, {0.6, 0.4}}, {{0.2, 0.8}, {0.6, 0.4}}});
  EXPECT_NEAR(pairwise_mi(t, 0, 1), 0.0, 1e-15);
}

TEST(PairwiseMi, PerfectCorrelationGivesLn2) {
  auto t = tensor_from({{{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}});
  auto J = pairwise_joint(t, 0, t, 1);
  EXPECT_EQ(J(0, 0), 0.5);
  EXPECT_EQ(J(0, 1), 0.0);
  EXPECT_EQ(J(1, 0), 0.0);
  EXPECT_EQ(J(1, 1), 0.5);
  EXPECT_NEAR(pairwise_mi(t, 0, 1), std::log(2.0), 1e-15);
}

TEST(PairwiseMi, MatchesEnumeratedJointTable) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Stream s = Stream::make(seed, "pmi");
    const int k = 1 + static_cast<int>(s.index(5)), c = 2 + static_cast<int>(s.index(2));
    auto t = random_tensor(k, 2, c, seed + 10);
    EXPECT_NEAR(pairwise_mi(t, 0, 1), oracle::pairwise_mi_enumerated(t, 0, 1), 1e-10);
  }
}

TEST(PairwiseMi, SymmetricNonNegativeBounded) {
  auto t = random_tensor(15, 12, 3, 4);
  for (int a = 0; a < 12; ++a)
    for (int b = 0; b < 12; ++b) {
      const double ab = pairwise_mi(t, a, b), ba = pairwise_mi(t, b, a);
      EXPECT_NEAR(ab, ba, 1e-12);
      EXPECT_GE(ab, 0.0);
      EXPECT_LE(ab, std::log(3.0) + 1e-12);
    }
}

TEST(PairwiseMi, BoundedByMarginalEntropies) {
  auto t = random_tensor(10, 6, 3, 5);
  const Eigen::MatrixXd bma = t.bma();
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b)
      EXPECT_LE(pairwise_mi(t, a, b), std::min(entropy(Eigen::RowVectorXd(bma.row(a))), entropy(Eigen::RowVectorXd(bma.row(b)))) + 1e-12);
}

TEST(PairwiseJoint, SumsToOneAndMarginalizesToBma) {
  auto t = random_tensor(12, 5, 4, 6);
  const Eigen::MatrixXd bma = t.bma();
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      auto J = pairwise_joint(t, a, t, b);
      EXPECT_NEAR(J.sum(), 1.0, 1e-9);
      EXPECT_GE(J.minCoeff(), 0.0);
      EXPECT_LE((J.rowwise().sum().transpose() - bma.row(a)).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LE((J.colwise().sum() - bma.row(b)).cwiseAbs().maxCoeff(), 1e-9);
    }
}

// ---- EPIG -------------------------------------------------------------------

TEST(Epig, MatchesDirectAverageOfPairwiseMi) {
  auto pool = random_tensor(30, 70, 3, 7);
  auto val = random_tensor(30, 9, 3, 8);
  // put both under one "ensemble": reuse sample rows by construction
  auto s = epig_scores(pool, val);
  EXPECT_EQ(s.kind, ScoreKind::epig);
  for (int x = 0; x < 70; ++x) {
    double direct = 0;
    for (int v = 0; v < 9; ++v) direct += pairwise_mi(val, v, pool, x);
    EXPECT_NEAR(s.values[x], direct / 9, 1e-12);
  }
}

TEST(Epig, ConstantCandidateScoresZero) {
  auto val = random_tensor(8, 4, 2, 9);
  auto pool = tensor_from(std::vector<std::vector<std::vector<double>>>(8, {{0.3, 0.7}}));
  EXPECT_NEAR(epig_scores(pool, val).values[0], 0.0, 1e-15);
}

TEST(Epig, ArgmaxEqualsArgminOfExpectedConditionalEntropy) {
  for (std::uint64_t inst = 0; inst < 50; ++inst) {
    auto pool = random_tensor(6, 5, 3, 100 + inst);
    auto val = random_tensor(6, 4, 3, 200 + inst);
    auto s = epig_scores(pool, val).values;
    // sum_x E_yhat[H(Y_x | Y_xhat = yhat)] computed from the plug-in joints
    std::vector<double> cond(5, 0.0);
    double const_part = 0;
    const Eigen::MatrixXd vb = val.bma();
    for (int v = 0; v < 4; ++v) const_part += entropy(Eigen::RowVectorXd(vb.row(v)));
    for (int x = 0; x < 5; ++x) {
      for (int v = 0; v < 4; ++v) {
        auto J = pairwise_joint(val, v, pool, x);  // rows: y_v, cols: y_xhat
        for (int yh = 0; yh < 3; ++yh) {
          const double py = J.col(yh).sum();
          if (py <= 0) continue;
          std::vector<double> cond_row(3);
          for (int y = 0; y < 3; ++y) cond_row[y] = J(y, yh) / py;
          cond[x] += py * entropy(cond_row);
        }
      }
    }
    std::size_t arg_epig = 0, arg_cond = 0;
    for (std::size_t x = 1; x < 5; ++x) {
      if (s[x] > s[arg_epig]) arg_epig = x;
      if (cond[x] < cond[arg_cond]) arg_cond = x;
    }
    EXPECT_EQ(arg_epig, arg_cond);
    for (int x = 0; x < 5; ++x) EXPECT_NEAR(4 * s[x] + cond[x], const_part, 1e-9);
  }
}

TEST(Epig, ChunkingDoesNotAffectValues) {
  // 150 columns span three 64-wide chunks; compare against per-column evaluation
  auto pool = random_tensor(10, 150, 2, 11);
  auto val = random_tensor(10, 5, 2, 12);
  auto all = epig_scores(pool, val).values;
  for (int x : {0, 63, 64, 127, 128, 149}) {
    PredictiveTensor one;
    one.k = 10;
    one.n = 1;
    one.c = 2;
    for (int y = 0; y < 2; ++y) one.probs.push_back(pool.probs[y].col(x));
    one.point_ids = {0};
    EXPECT_NEAR(epig_scores(one, val).values[0], all[x], 1e-14);
  }
}

TEST(Epig, ThreadCountDoesNotChangeBits) {
  auto pool = random_tensor(40, 300, 3, 13);
  auto val = random_tensor(40, 30, 3, 14);
  setenv("PARBALS_THREADS", "1", 1);
  auto a = epig_scores(pool, val).values;
  setenv("PARBALS_THREADS", "4", 1);
  auto b = epig_scores(pool, val).values;
  unsetenv("PARBALS_THREADS");
  EXPECT_EQ(a, b);
}

TEST(Epig, FullSubsampleEqualsFullV) {
  auto idx = validation_subsample(20, 20, 5, 3);
  std::vector<std::size_t> all(20);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(idx, all);
  EXPECT_EQ(validation_subsample(20, 500, 9, 1), all);
}

TEST(Epig, SubsampleDistinctSortedAndSeeded) {
  auto a = validation_subsample(100, 10, 1, 0), b = validation_subsample(100, 10, 1, 0);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 10u);
  EXPECT_NE(a, validation_subsample(100, 10, 1, 1));
}

TEST(Epig, EnsembleScoreUsesSubsample) {
  LabeledSet L(2, 2);
  Stream s = Stream::make(15);
  for (int i = 0; i < 10; ++i) L.append(Eigen::RowVector2d(s.normal(), s.normal()), static_cast<int>(s.index(2)));
  auto e = laplace_posterior(L, Prior{}, 40, 0);
  Eigen::MatrixXd V = Eigen::MatrixXd::Random(12, 2);
  const Eigen::RowVector2d x(0.4, -0.2);
  const double full = epig_score(e, x, V, 12, 0, 0);
  const auto rows = validation_subsample(12, 12, 0, 0);
  EXPECT_NEAR(full, epig_scores(predict_tensor(e, x), predict_tensor(e, select_rows(V, rows))).values[0], 1e-15);
  const double sub = epig_score(e, x, V, 5, 0, 0);
  const auto r5 = validation_subsample(12, 5, 0, 0);
  EXPECT_NEAR(sub, epig_scores(predict_tensor(e, x), predict_tensor(e, select_rows(V, r5))).values[0], 1e-15);
}

// ---- BatchBALD --------------------------------------------------------------

TEST(BatchBald, EmptyContextEqualsBald) {
  auto t = random_tensor(25, 10, 3, 16);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(batchbald_joint_mi(t, {i}), bald_score(t, i), 1e-12);
}

TEST(BatchBald, IdenticalSamplesGiveZero) {
  auto t = tensor_from(std::vector<std::vector<std::vector<double>>>(4, {{0.2, 0.8}, {0.5, 0.5}, {0.9, 0.1}}));
  EXPECT_NEAR(batchbald_joint_mi(t, {0, 1, 2}), 0.0, 1e-12);
}

TEST(BatchBald, TwoBinaryPointsThreeSamplesMatchesEnumeration) {
  auto t = random_tensor(3, 2, 2, 17);
  // independent computation: sum over the four configurations in reverse order
  double joint_h = 0;
  for (int code = 3; code >= 0; --code) {
    const int y0 = code & 1, y1 = code >> 1;
    double p = 0;
    for (int j = 2; j >= 0; --j) p += t(j, 0, y0) * t(j, 1, y1);
    p /= 3;
    joint_h -= p * std::log(p);
  }
  double cond = 0;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 2; ++i) cond += entropy(std::vector<double>{t(j, i, 0), t(j, i, 1)}) / 3;
  EXPECT_NEAR(batchbald_joint_mi(t, {0, 1}), joint_h - cond, 1e-12);
  EXPECT_NEAR(batchbald_joint_mi(t, {0, 1}), oracle::joint_mi_enumerated(t, {0, 1}), 1e-12);
}

TEST(BatchBald, MonotoneInBatch) {
  auto t = random_tensor(20, 6, 2, 18);
  double prev = 0;
  std::vector<int> batch;
  for (int i = 0; i < 6; ++i) {
    batch.push_back(i);
    const double v = batchbald_joint_mi(t, batch);
    EXPECT_GE(v, prev - 1e-9);
    prev = v;
  }
}

TEST(BatchBald, CapErrorMentionsParbals) {
  auto t = random_tensor(2, 13, 2, 19);
  std::vector<int> batch(13);
  std::iota(batch.begin(), batch.end(), 0);
  try {
    batchbald_joint_mi(t, batch);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("ParBaLS"), std::string::npos);
  }
  batch.pop_back();
  EXPECT_NO_THROW(batchbald_joint_mi(t, batch));  // 2^12 = 4096 is allowed
}

TEST(BatchBald, GreedyMatchesEnumeration) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto t = random_tensor(8, 7, 2 + static_cast<int>(seed % 2), 20 + seed);
    auto fast = select_batchbald(t, 3);
    auto slow = oracle::batchbald_greedy_enumerated(t, 3);
    EXPECT_EQ(fast.selected, slow.selected);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(fast.gains[s], slow.gains[s], 1e-10);
  }
}

TEST(BatchBald, GreedyFirstPickIsBaldArgmax) {
  auto t = random_tensor(15, 30, 3, 30);
  EXPECT_EQ(select_batchbald(t, 1).selected[0], select_top_b(bald_scores(t), 1)[0]);
}

// ---- top-B ------------------------------------------------------------------

TEST(TopB, Examples) {
  EXPECT_EQ(select_top_b(std::vector<double>{3, 1, 2}, 2), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_top_b(std::vector<double>{3, 1, 2}, 3).size(), 3u);
  EXPECT_EQ(select_top_b(std::vector<double>{5, 5, 1}, 1), std::vector<std::size_t>{0});
}

TEST(TopB, RejectsOversizedBatch) { EXPECT_THROW(select_top_b(std::vector<double>{1, 2}, 3), ValidationError); }

TEST(TopB, InvariantUnderIncreasingTransform) {
  Stream s = Stream::make(31);
  std::vector<double> v(50), w(50);
  for (int i = 0; i < 50; ++i) {
    v[i] = s.uniform();
    w[i] = std::exp(3 * v[i]) - 7;
  }
  EXPECT_EQ(select_top_b(v, 10), select_top_b(w, 10));
}

// ---- stochastic variants ----------------------------------------------------

TEST(Stochastic, NoiseFreeReproducesTopB) {
  std::vector<double> sc = {0.3, 0.9, 0.1, 0.5, 0.7};
  std::vector<std::size_t> ids = {0, 1, 2, 3, 4};
  for (auto v : {StochasticVariant::power, StochasticVariant::softrank, StochasticVariant::softmax}) {
    StochasticOptions opt;
    opt.variant = v;
    opt.noise_free = true;
    EXPECT_EQ(select_stochastic(sc, 3, ids, opt), select_top_b(sc, 3));
  }
}

TEST(Stochastic, DeterministicPerSeed) {
  std::vector<double> sc(40);
  std::iota(sc.begin(), sc.end(), 1.0);
  std::vector<std::size_t> ids(40);
  std::iota(ids.begin(), ids.end(), std::size_t{100});
  StochasticOptions opt;
  opt.seed = 5;
  EXPECT_EQ(select_stochastic(sc, 10, ids, opt), select_stochastic(sc, 10, ids, opt));
  opt.seed = 6;
  auto other = select_stochastic(sc, 10, ids, opt);
  opt.seed = 5;
  EXPECT_NE(select_stochastic(sc, 10, ids, opt), other);
}

TEST(Stochastic, PowerSamplingLaw) {
  const std::vector<double> sc = {0.1, 0.2, 0.3, 0.4};
  const std::vector<std::size_t> ids = {0, 1, 2, 3};
  for (double beta : {1.0, 2.0}) {
    std::vector<int> counts(4, 0);
    const int n = 20000;
    for (int t = 0; t < n; ++t) {
      StochasticOptions opt;
      opt.beta = beta;
      opt.seed = 1000 + t;
      ++counts[select_stochastic(sc, 1, ids, opt)[0]];
    }
    double z = 0;
    for (double s : sc) z += std::pow(s, beta);
    for (int i = 0; i < 4; ++i) {
      const double p = std::pow(sc[i], beta) / z;
      EXPECT_NEAR(counts[i] / double(n), p, 3 * std::sqrt(p * (1 - p) / n)) << "beta " << beta << " i " << i;
    }
  }
}

TEST(Stochastic, SoftmaxSamplingLaw) {
  // keys s + g/beta: Gumbel-max over logits beta*s
  const std::vector<double> sc = {0.0, 0.5, 1.0};
  const std::vector<std::size_t> ids = {0, 1, 2};
  std::vector<int> counts(3, 0);
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    StochasticOptions opt;
    opt.variant = StochasticVariant::softmax;
    opt.beta = 2.0;
    opt.seed = 50000 + t;
    ++counts[select_stochastic(sc, 1, ids, opt)[0]];
  }
  double z = 0;
  for (double s : sc) z += std::exp(2 * s);
  for (int i = 0; i < 3; ++i) {
    const double p = std::exp(2 * sc[i]) / z;
    EXPECT_NEAR(counts[i] / double(n), p, 3 * std::sqrt(p * (1 - p) / n));
  }
}

TEST(Stochastic, SoftrankKeysUseRanks) {
  std::vector<double> sc = {0.2, 0.9, 0.5};
  StochasticOptions opt;
  opt.variant = StochasticVariant::softrank;
  opt.noise_free = true;
  auto keys = stochastic_keys(sc, {0, 1, 2}, opt);
  EXPECT_NEAR(keys[1], 0.0, 1e-15);
  EXPECT_NEAR(keys[2], -std::log(2.0), 1e-15);
  EXPECT_NEAR(keys[0], -std::log(3.0), 1e-15);
}

TEST(Stochastic, PowerClampsNonPositiveWithWarning) {
  std::vector<std::string> warnings;
  auto saved = warning_sink();
  warning_sink() = [&](const std::string& m) { warnings.push_back(m); };
  StochasticOptions opt;
  opt.noise_free = true;
  auto keys = stochastic_keys({0.0, -1.0, 0.5}, {0, 1, 2}, opt);
  warning_sink() = saved;
  EXPECT_EQ(keys[0], std::log(1e-12));
  EXPECT_EQ(keys[1], std::log(1e-12));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Stochastic, RejectsNonPositiveBeta) {
  StochasticOptions opt;
  opt.beta = 0;
  EXPECT_THROW(select_stochastic({1, 2}, 1, {0, 1}, opt), ValidationError);
}

TEST(Stochastic, NoiseDependsOnPointIdNotPosition) {
  // the same point keeps its Gumbel draw when the candidate list shrinks
  std::vector<double> sc = {0.4, 0.6, 0.5};
  StochasticOptions opt;
  opt.seed = 3;
  auto full = stochastic_keys(sc, {10, 11, 12}, opt);
  auto part = stochastic_keys({0.6, 0.5}, {11, 12}, opt);
  EXPECT_EQ(full[1], part[0]);
  EXPECT_EQ(full[2], part[1]);
}

// ---- score dump -------------------------------------------------------------

TEST(ScoreDump, CsvFormat) {
  std::ostringstream out;
  write_scores_header(out);
  write_scores_csv(out, {7, 9}, Scores{{0.5, 0.25}, ScoreKind::bald}, 3);
  EXPECT_EQ(out.str(), "point_id,score,kind,iteration\n7,0.5,bald,3\n9,0.25,bald,3\n");
}
