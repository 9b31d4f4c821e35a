#pragma once

// Multiclass Bayesian logistic regression with an isotropic Gaussian prior,
// fitted by Newton's method and approximated by a Laplace posterior.
//
// Parameters use the full c-logit form. Flattened parameter vectors are
// class-major: for class a, entries [a*(d+1), a*(d+1)+d) hold W[a, :] and
// entry a*(d+1)+d holds b[a]. P = c*d + c.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "parbals/error.hpp"
#include "parbals/rng.hpp"

namespace parbals {

inline Eigen::Index param_count(int classes, int dim) { return static_cast<Eigen::Index>(classes) * (dim + 1); }

struct WeightPoint {
  Eigen::MatrixXd W;  // c x d
  Eigen::VectorXd b;  // c

  int classes() const { return static_cast<int>(W.rows()); }
  int dim() const { return static_cast<int>(W.cols()); }

  static WeightPoint zero(int classes, int dim) {
    return {Eigen::MatrixXd::Zero(classes, dim), Eigen::VectorXd::Zero(classes)};
  }

  Eigen::VectorXd flat() const {
    const int c = classes(), d = dim();
    Eigen::VectorXd theta(param_count(c, d));
    for (int a = 0; a < c; ++a) {
      theta.segment(a * (d + 1), d) = W.row(a).transpose();
      theta(a * (d + 1) + d) = b(a);
    }
    return theta;
  }

  static WeightPoint from_flat(const Eigen::Ref<const Eigen::VectorXd>& theta, int classes, int dim) {
    WeightPoint w = zero(classes, dim);
    for (int a = 0; a < classes; ++a) {
      w.W.row(a) = theta.segment(a * (dim + 1), dim).transpose();
      w.b(a) = theta(a * (dim + 1) + dim);
    }
    return w;
  }

  /// c x (d+1) matrix [W | b].
  Eigen::MatrixXd augmented() const {
    Eigen::MatrixXd theta(W.rows(), W.cols() + 1);
    theta << W, b;
    return theta;
  }
};

struct Prior {
  double variance = 1.0;

  double precision() const { return 1.0 / variance; }
  void validate() const {
    if (!(variance > 0.0) || !std::isfinite(variance)) throw ValidationError("prior variance must be positive");
  }
};

/// Training points with labels in {0..c-1}.
struct LabeledSet {
  Eigen::MatrixXd X;  // n x d
  std::vector<int> y;
  int num_classes = 2;

  LabeledSet() = default;
  LabeledSet(int classes, int dim) : X(0, dim), num_classes(classes) {}
  LabeledSet(Eigen::MatrixXd x, std::vector<int> labels, int classes)
      : X(std::move(x)), y(std::move(labels)), num_classes(classes) {
    validate();
  }

  std::size_t size() const { return y.size(); }
  int dim() const { return static_cast<int>(X.cols()); }

  void append(const Eigen::Ref<const Eigen::RowVectorXd>& x, int label) {
    if (label < 0 || label >= num_classes) throw ValidationError("label out of range");
    X.conservativeResize(X.rows() + 1, Eigen::NoChange);
    X.row(X.rows() - 1) = x;
    y.push_back(label);
  }

  void validate() const {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw ValidationError("labeled set: row/label count mismatch");
    for (int v : y) {
      if (v < 0 || v >= num_classes) throw ValidationError("labeled set: label out of range");
    }
    if (!X.allFinite()) throw ValidationError("labeled set: non-finite feature");
  }
};

namespace detail {

inline Eigen::MatrixXd with_bias_column(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Xt(X.rows(), X.cols() + 1);
  Xt << X, Eigen::VectorXd::Ones(X.rows());
  return Xt;
}

inline Eigen::MatrixXd unflatten(const Eigen::VectorXd& theta, int c, int d) {
  Eigen::MatrixXd T(c, d + 1);
  for (int a = 0; a < c; ++a) T.row(a) = theta.segment(a * (d + 1), d + 1).transpose();
  return T;
}

inline Eigen::VectorXd flatten(const Eigen::MatrixXd& T) {
  const auto c = T.rows(), w = T.cols();
  Eigen::VectorXd theta(c * w);
  for (Eigen::Index a = 0; a < c; ++a) theta.segment(a * w, w) = T.row(a).transpose();
  return theta;
}

/// Row-wise softmax in place; returns the row log-sum-exps.
inline Eigen::VectorXd softmax_rows(Eigen::MatrixXd& Z) {
  Eigen::VectorXd lse(Z.rows());
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double m = Z.row(i).maxCoeff();
    Z.row(i).array() = (Z.row(i).array() - m).exp();
    const double s = Z.row(i).sum();
    Z.row(i) /= s;
    lse(i) = m + std::log(s);
  }
  return lse;
}

}  // namespace detail

/// Class probabilities of a single weight point: n x c.
inline Eigen::MatrixXd softmax_probs(const WeightPoint& w, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Z = (X * w.W.transpose()).rowwise() + w.b.transpose();
  detail::softmax_rows(Z);
  return Z;
}

/// Negative log posterior (up to a constant):
/// sum_i -ln softmax(W x_i + b)[y_i] + |theta|^2 / (2 sigma^2).
inline double map_objective(const LabeledSet& L, const Prior& prior, const Eigen::VectorXd& theta) {
  const int c = L.num_classes, d = L.dim();
  double value = 0.5 * prior.precision() * theta.squaredNorm();
  if (L.size() == 0) return value;
  const Eigen::MatrixXd T = detail::unflatten(theta, c, d);
  Eigen::MatrixXd Z = detail::with_bias_column(L.X) * T.transpose();
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double m = Z.row(i).maxCoeff();
    const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
    value += lse - Z(i, L.y[static_cast<std::size_t>(i)]);
  }
  return value;
}

inline Eigen::VectorXd map_gradient(const LabeledSet& L, const Prior& prior, const Eigen::VectorXd& theta) {
  const int c = L.num_classes, d = L.dim();
  Eigen::VectorXd g = prior.precision() * theta;
  if (L.size() == 0) return g;
  const Eigen::MatrixXd T = detail::unflatten(theta, c, d);
  const Eigen::MatrixXd Xt = detail::with_bias_column(L.X);
  Eigen::MatrixXd R = Xt * T.transpose();
  detail::softmax_rows(R);
  for (std::size_t i = 0; i < L.size(); ++i) R(static_cast<Eigen::Index>(i), L.y[i]) -= 1.0;
  g += detail::flatten(R.transpose() * Xt);
  return g;
}

/// Fisher / Hessian of the multinomial logistic NLL at `probs_at`:
/// sum_x (diag(p_x) - p_x p_x^T) (x) [x;1][x;1]^T, plus I/sigma^2 when requested.
/// Label-free by construction.
inline Eigen::MatrixXd hessian(const Eigen::MatrixXd& points, const WeightPoint& probs_at, const Prior& prior,
                               bool include_prior) {
  const int c = probs_at.classes(), d = probs_at.dim();
  const Eigen::Index w = d + 1;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(c * w, c * w);
  if (points.rows() > 0) {
    const Eigen::MatrixXd Xt = detail::with_bias_column(points);
    const Eigen::MatrixXd P = softmax_probs(probs_at, points);
    for (int a = 0; a < c; ++a) {
      for (int b = a; b < c; ++b) {
        Eigen::VectorXd weight = -P.col(a).cwiseProduct(P.col(b));
        if (a == b) weight += P.col(a);
        const Eigen::MatrixXd block = Xt.transpose() * weight.asDiagonal() * Xt;
        H.block(a * w, b * w, w, w) = block;
        if (a != b) H.block(b * w, a * w, w, w) = block.transpose();
      }
    }
  }
  if (include_prior) H.diagonal().array() += prior.precision();
  return H;
}

inline Eigen::MatrixXd map_hessian(const LabeledSet& L, const Prior& prior, const Eigen::VectorXd& theta) {
  return hessian(L.X, WeightPoint::from_flat(theta, L.num_classes, L.dim()), prior, true);
}

struct FitOptions {
  double tol = 1e-8;
  int max_iterations = 500;
};

struct MapFit {
  WeightPoint point;
  int iterations = 0;
  double grad_norm = 0.0;
};

/// Newton's method with Armijo backtracking on the (strictly convex) MAP
/// objective. Stops when the gradient norm is at most `tol`.
inline MapFit map_fit(const LabeledSet& L, const Prior& prior, const FitOptions& opt = {},
                      const WeightPoint* warm_start = nullptr) {
  prior.validate();
  if (!(opt.tol > 0.0)) throw ValidationError("tol must be positive");
  L.validate();
  const int c = L.num_classes, d = L.dim();
  Eigen::VectorXd theta = warm_start ? warm_start->flat() : Eigen::VectorXd::Zero(param_count(c, d));
  if (theta.size() != param_count(c, d)) throw ValidationError("warm start has the wrong shape");

  double f = map_objective(L, prior, theta);
  Eigen::VectorXd g = map_gradient(L, prior, theta);
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.norm() <= opt.tol) break;
    const Eigen::LLT<Eigen::MatrixXd> llt(map_hessian(L, prior, theta));
    Eigen::VectorXd step = llt.info() == Eigen::Success ? Eigen::VectorXd(llt.solve(-g)) : Eigen::VectorXd(-g);
    double slope = g.dot(step);
    if (!(slope < 0.0)) {
      step = -g;
      slope = -g.squaredNorm();
    }
    // Inside the quadratic region the full step is taken without a line
    // search; the objective change there is below rounding of f itself.
    double t = 1.0;
    Eigen::VectorXd next = theta + step;
    double f_next = map_objective(L, prior, next);
    if (-slope > 1e-12 * (1.0 + std::abs(f))) {
      while (f_next > f + 1e-4 * t * slope && t > 1e-12) {
        t *= 0.5;
        next = theta + t * step;
        f_next = map_objective(L, prior, next);
      }
    }
    theta = std::move(next);
    f = f_next;
    g = map_gradient(L, prior, theta);
  }
  const double gn = g.norm();
  if (gn > opt.tol) {
    throw FitError("MAP fit did not converge in " + std::to_string(opt.max_iterations) +
                       " iterations (gradient norm " + std::to_string(gn) + ")",
                   gn);
  }
  return {WeightPoint::from_flat(theta, c, d), it, gn};
}

// ---------------------------------------------------------------------------
// Laplace posterior

struct PosteriorEnsemble {
  WeightPoint map;
  Eigen::MatrixXd covariance;  // P x P
  Eigen::MatrixXd samples;     // k x P, flattened weight points
  std::uint64_t seed = 0;
  double prior_variance = 1.0;
  int fit_iterations = 0;
  double jitter = 0.0;  // diagonal regularization that was needed, 0 if none

  int k() const { return static_cast<int>(samples.rows()); }
  int classes() const { return map.classes(); }
  int dim() const { return map.dim(); }
  WeightPoint sample(int j) const { return WeightPoint::from_flat(samples.row(j).transpose(), classes(), dim()); }
};

namespace detail {

/// Cholesky factor of M, adding eps*I with eps = 1e-8, 1e-7, ..., 1e-4 when needed.
inline Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& M, double& jitter_used, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double eps = 1e-8; eps <= 1e-4 * (1 + 1e-9); eps *= 10.0) {
    llt.compute(M + eps * Eigen::MatrixXd::Identity(M.rows(), M.cols()));
    if (llt.info() == Eigen::Success) {
      jitter_used = std::max(jitter_used, eps);
      warn(std::string(what) + " not positive definite; regularized with " + std::to_string(eps) + " * I");
      return llt.matrixL();
    }
  }
  throw NumericalError(std::string(what) + " is singular even after 1e-4 * I regularization");
}

}  // namespace detail

/// theta_j = map + chol(cov) z_j with z_j drawn from stream (seed, "posterior", j).
inline Eigen::MatrixXd draw_posterior_samples(const WeightPoint& map, const Eigen::MatrixXd& cov, std::uint64_t seed,
                                              int k, double& jitter) {
  if (k < 1) throw ValidationError("k must be >= 1");
  const Eigen::MatrixXd chol = detail::cholesky_with_jitter(cov, jitter, "posterior covariance");
  const Eigen::VectorXd center = map.flat();
  const Eigen::Index P = center.size();
  Eigen::MatrixXd Z(P, k);
  for (int j = 0; j < k; ++j) {
    Stream s = Stream::make(seed, "posterior", j);
    for (Eigen::Index p = 0; p < P; ++p) Z(p, j) = s.normal();
  }
  Eigen::MatrixXd out = (chol * Z).transpose();
  out.rowwise() += center.transpose();
  return out;
}

inline PosteriorEnsemble ensemble_from_map(const LabeledSet& L, const Prior& prior, const MapFit& fit, int k,
                                           std::uint64_t seed) {
  PosteriorEnsemble e;
  e.map = fit.point;
  e.seed = seed;
  e.prior_variance = prior.variance;
  e.fit_iterations = fit.iterations;
  const Eigen::MatrixXd H = hessian(L.X, fit.point, prior, true);
  const Eigen::MatrixXd chol_h = detail::cholesky_with_jitter(H, e.jitter, "Hessian");
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(H.rows(), H.cols());
  chol_h.triangularView<Eigen::Lower>().solveInPlace(inv);
  chol_h.triangularView<Eigen::Lower>().transpose().solveInPlace(inv);
  e.covariance = 0.5 * (inv + inv.transpose());
  e.samples = draw_posterior_samples(e.map, e.covariance, seed, k, e.jitter);
  return e;
}

/// Laplace approximation: N(map, [Hessian of the negative log posterior]^-1), k samples.
inline PosteriorEnsemble laplace_posterior(const LabeledSet& L, const Prior& prior, int k, std::uint64_t seed,
                                           const FitOptions& opt = {}) {
  if (k < 1) throw ValidationError("k must be >= 1");
  return ensemble_from_map(L, prior, map_fit(L, prior, opt), k, seed);
}

/// Posterior after adding one labeled point, warm-started from `warm`.
/// Agrees with a cold laplace_posterior on the extended set up to the MAP tolerance.
inline PosteriorEnsemble refit_with(const LabeledSet& L, const Eigen::Ref<const Eigen::RowVectorXd>& x, int y,
                                    const Prior& prior, int k, std::uint64_t seed, const WeightPoint& warm,
                                    const FitOptions& opt = {}, LabeledSet* extended_out = nullptr) {
  LabeledSet ext = L;
  ext.append(x, y);
  auto e = ensemble_from_map(ext, prior, map_fit(ext, prior, opt, &warm), k, seed);
  if (extended_out) *extended_out = std::move(ext);
  return e;
}

// ---------------------------------------------------------------------------
// Prediction

/// Per-sample class probabilities: probs[y](j, i) = p(y | x_i, w_j).
struct PredictiveTensor {
  int k = 0, n = 0, c = 0;
  std::vector<Eigen::MatrixXd> probs;  // c matrices, each k x n
  std::vector<std::size_t> point_ids;

  double operator()(int j, int i, int y) const { return probs[static_cast<std::size_t>(y)](j, i); }

  /// Bayesian model average: n x c.
  Eigen::MatrixXd bma() const {
    Eigen::MatrixXd out(n, c);
    for (int y = 0; y < c; ++y) out.col(y) = probs[static_cast<std::size_t>(y)].colwise().mean().transpose();
    return out;
  }
};

struct Prediction {
  PredictiveTensor tensor;
  Eigen::MatrixXd bma;
};

inline PredictiveTensor predict_tensor(const Eigen::MatrixXd& samples, int classes, int dim, const Eigen::MatrixXd& X) {
  const int k = static_cast<int>(samples.rows());
  const int n = static_cast<int>(X.rows());
  const int c = classes;
  const Eigen::Index w = dim + 1;
  if (X.cols() != dim) throw ValidationError("prediction features have the wrong width");
  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(k) * c, w);
  for (int j = 0; j < k; ++j)
    for (int a = 0; a < c; ++a) stacked.row(j * c + a) = samples.row(j).segment(a * w, w);
  const Eigen::MatrixXd logits = stacked * detail::with_bias_column(X).transpose();

  PredictiveTensor t;
  t.k = k;
  t.n = n;
  t.c = c;
  t.probs.assign(static_cast<std::size_t>(c), Eigen::MatrixXd(k, n));
  t.point_ids.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t.point_ids[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < c; ++a) m = std::max(m, logits(j * c + a, i));
      double s = 0.0;
      for (int a = 0; a < c; ++a) {
        const double e = std::exp(logits(j * c + a, i) - m);
        t.probs[static_cast<std::size_t>(a)](j, i) = e;
        s += e;
      }
      for (int a = 0; a < c; ++a) t.probs[static_cast<std::size_t>(a)](j, i) /= s;
    }
  }
  return t;
}

inline PredictiveTensor predict_tensor(const PosteriorEnsemble& e, const Eigen::MatrixXd& X) {
  return predict_tensor(e.samples, e.classes(), e.dim(), X);
}

inline Prediction predict(const PosteriorEnsemble& e, const Eigen::MatrixXd& X) {
  if (e.k() < 1) throw ValidationError("empty ensemble");
  Prediction p;
  p.tensor = predict_tensor(e, X);
  p.bma = p.tensor.bma();
  return p;
}

// ---------------------------------------------------------------------------
// Serialization: map, covariance, seed and k; samples are regenerated on load.

inline std::string ensemble_to_json(const PosteriorEnsemble& e) {
  std::ostringstream out;
  out << std::setprecision(17);
  auto write_row = [&](const auto& v) {
    out << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << v(i);
    out << ']';
  };
  out << "{\"k\":" << e.k() << ",\"seed\":" << e.seed << ",\"prior_variance\":" << e.prior_variance
      << ",\"classes\":" << e.classes() << ",\"dim\":" << e.dim() << ",\"map\":{\"W\":[";
  for (Eigen::Index a = 0; a < e.map.W.rows(); ++a) {
    if (a) out << ',';
    write_row(e.map.W.row(a));
  }
  out << "],\"b\":";
  write_row(e.map.b);
  out << "},\"covariance\":[";
  for (Eigen::Index r = 0; r < e.covariance.rows(); ++r) {
    if (r) out << ',';
    write_row(e.covariance.row(r));
  }
  out << "]}";
  return out.str();
}

inline PosteriorEnsemble ensemble_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PosteriorEnsemble e;
    const int c = j.at("classes").get<int>(), d = j.at("dim").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.prior_variance = j.at("prior_variance").get<double>();
    e.map = WeightPoint::zero(c, d);
    const auto W = j.at("map").at("W").get<std::vector<std::vector<double>>>();
    const auto b = j.at("map").at("b").get<std::vector<double>>();
    if (W.size() != static_cast<std::size_t>(c) || b.size() != static_cast<std::size_t>(c)) {
      throw ValidationError("ensemble json: map shape mismatch");
    }
    for (int a = 0; a < c; ++a) {
      if (W[static_cast<std::size_t>(a)].size() != static_cast<std::size_t>(d)) throw ValidationError("ensemble json: W row length");
      for (int q = 0; q < d; ++q) e.map.W(a, q) = W[static_cast<std::size_t>(a)][static_cast<std::size_t>(q)];
      e.map.b(a) = b[static_cast<std::size_t>(a)];
    }
    const auto cov = j.at("covariance").get<std::vector<std::vector<double>>>();
    const auto P = param_count(c, d);
    if (cov.size() != static_cast<std::size_t>(P)) throw ValidationError("ensemble json: covariance shape mismatch");
    e.covariance.resize(P, P);
    for (Eigen::Index r = 0; r < P; ++r) {
      if (cov[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(P)) throw ValidationError("ensemble json: covariance row length");
      for (Eigen::Index q = 0; q < P; ++q) e.covariance(r, q) = cov[static_cast<std::size_t>(r)][static_cast<std::size_t>(q)];
    }
    e.samples = draw_posterior_samples(e.map, e.covariance, e.seed, j.at("k").get<int>(), e.jitter);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("ensemble json: ") + ex.what());
  }
}

}  // namespace parbals
