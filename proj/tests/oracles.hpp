#pragma once

// Independent reference implementations used as test oracles. Each one is written from the
// defining formula with plain loops and shares no code with the library under test.

#include <pems/core.hpp>
#include <pems/neighbors.hpp>
#include <pems/svr.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using pems::Matrix;
using pems::Vector;

inline double mse(const std::vector<double>& p, const std::vector<double>& a) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - a[i]) * (p[i] - a[i]);
  return s / static_cast<double>(p.size());
}

inline double mae(const std::vector<double>& p, const std::vector<double>& a) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - a[i]);
  return s / static_cast<double>(p.size());
}

// Least squares with an intercept via the normal equations on [1 X].
inline std::pair<Vector, double> least_squares(const Matrix& x, const Vector& y) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  const Eigen::VectorXd beta = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  return {beta.tail(x.cols()), beta(0)};
}

// Closed-form ridge for (1/2n)||y - Xw - b||^2 + (lambda/2)||w||^2 with unpenalised b.
inline std::pair<Vector, double> ridge(const Matrix& x, const Vector& y, double lambda) {
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const double my = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - mx;
  const Eigen::VectorXd yc = y.array() - my;
  Eigen::MatrixXd g = xc.transpose() * xc / n;
  g.diagonal().array() += lambda;
  const Eigen::VectorXd w = g.ldlt().solve(xc.transpose() * yc / n);
  return {w, my - mx.dot(w)};
}

// Best single split on one feature by exhaustive enumeration of midpoints.
struct StumpSplit {
  double threshold;
  double left_mean;
  double right_mean;
};

inline StumpSplit best_stump(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> vals = x;
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  StumpSplit best{0, 0, 0};
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
    const double t = 0.5 * (vals[k] + vals[k + 1]);
    double sl = 0, sr = 0, nl = 0, nr = 0;
    for (std::size_t i = 0; i < x.size(); ++i) (x[i] <= t ? (sl += y[i], nl += 1) : (sr += y[i], nr += 1));
    const double ml = sl / nl, mr = sr / nr;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sse += std::pow(y[i] - (x[i] <= t ? ml : mr), 2);
    if (sse < best_sse) {
      best_sse = sse;
      best = {t, ml, mr};
    }
  }
  return best;
}

// Full sort of all distances; ties by lower index.
inline std::vector<pems::neighbors::Neighbor> knn_sorted(const Matrix& pts, const Eigen::RowVectorXd& q, std::size_t k) {
  std::vector<pems::neighbors::Neighbor> all;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double s = 0;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) s += (pts(i, j) - q(j)) * (pts(i, j) - q(j));
    all.push_back({static_cast<std::size_t>(i), std::sqrt(s)});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  all.resize(k);
  return all;
}

// Sum_i coef_i * k(sv_i, x) + b, double loop.
inline double svr_decision(const pems::svr::SvrModel& m, const Eigen::RowVectorXd& x) {
  double s = m.bias;
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i) {
    double k = 0;
    if (m.kernel == pems::svr::Kernel::rbf) {
      double d2 = 0;
      for (Eigen::Index j = 0; j < x.size(); ++j) d2 += std::pow(m.support_vectors(i, j) - x(j), 2);
      k = std::exp(-m.gamma * d2);
    } else {
      for (Eigen::Index j = 0; j < x.size(); ++j) k += m.support_vectors(i, j) * x(j);
    }
    s += m.coefficients(i) * k;
  }
  return s;
}

// KKT audit for epsilon-SVR: recovers (alpha_i, alpha_i^*) for every training row from
// the stored coefficients and checks the complementary-slackness conditions on the
// training residuals. Returns the largest violation.
inline double svr_kkt_violation(const pems::svr::SvrModel& m, const Matrix& x, const Vector& y) {
  const double C = m.C, eps = m.epsilon;
  double worst = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double coef = 0;
    for (Eigen::Index s = 0; s < m.support_vectors.rows(); ++s)
      if ((m.support_vectors.row(s) - x.row(i)).squaredNorm() == 0.0) coef = m.coefficients(s);
    const double r = y(i) - svr_decision(m, x.row(i));  // residual
    const double a = std::max(coef, 0.0), as = std::max(-coef, 0.0);
    const double small = 1e-9 * C;
    double v = 0;
    if (a <= small && as <= small) v = std::max(0.0, std::fabs(r) - eps);
    else if (a > small && a < C - small) v = std::fabs(r - eps);
    else if (as > small && as < C - small) v = std::fabs(r + eps);
    else if (a >= C - small) v = std::max(0.0, eps - r);
    else v = std::max(0.0, eps + r);
    worst = std::max(worst, v);
  }
  return worst;
}

// Central finite-difference gradient of f with respect to every entry of p.
inline Eigen::MatrixXd numeric_gradient(Eigen::MatrixXd& p, const std::function<double()>& f, double h = 1e-5) {
  Eigen::MatrixXd g(p.rows(), p.cols());
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double old = p(i, j);
      p(i, j) = old + h;
      const double up = f();
      p(i, j) = old - h;
      const double down = f();
      p(i, j) = old;
      g(i, j) = (up - down) / (2 * h);
    }
  return g;
}

// max |a - n| / max(|a|, |n|, floor): relative error with an absolute floor for tiny entries.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric, double floor = 1e-6) {
  double worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i], n = numeric.data()[i];
    worst = std::max(worst, std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor}));
  }
  return worst;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> nd(0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) {
  std::normal_distribution<double> nd(0, sd);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

}  // namespace oracle
