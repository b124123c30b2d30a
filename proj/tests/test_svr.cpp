#include <pems/svr.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace pems;
using namespace pems::svr;

namespace {

struct Problem {
  Matrix x;
  Vector y;
};

Problem random_problem(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
  std::mt19937_64 rng(seed);
  Problem p{oracle::random_matrix(rng, n, d), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) p.y(i) = std::sin(2 * p.x(i, 0)) + 0.5 * p.x.row(i).squaredNorm() / double(d);
  p.y += oracle::random_vector(rng, n, 0.1);
  return p;
}

Problem line(Eigen::Index n) {
  Problem p{Matrix(n, 1), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    p.x(i, 0) = -1.0 + 2.0 * double(i) / double(n - 1);
    p.y(i) = 2.0 * p.x(i, 0);
  }
  return p;
}

}  // namespace

TEST(GammaScale, Definition) {
  std::mt19937_64 rng(1);
  Matrix x = oracle::random_matrix(rng, 500, 13);
  x = (x.rowwise() - x.colwise().mean()).eval();
  const Eigen::RowVectorXd sd = (x.array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) /= sd(j);
  EXPECT_NEAR(gamma_scale(x), 1.0 / 13.0, 1e-12);

  Matrix one(2, 1);
  one << -2, 2;  // population variance 4
  EXPECT_DOUBLE_EQ(gamma_scale(one), 0.25);
}

TEST(GammaScale, DuplicatedRowsUnchanged) {
  std::mt19937_64 rng(2);
  const Matrix x = oracle::random_matrix(rng, 40, 3, 2.0);
  Matrix twice(80, 3);
  twice << x, x;
  EXPECT_NEAR(gamma_scale(twice), gamma_scale(x), 1e-12 * gamma_scale(x));
}

TEST(GammaScale, Errors) {
  EXPECT_THROW(gamma_scale(Matrix(0, 2)), DataError);
  EXPECT_THROW(gamma_scale(Matrix::Ones(5, 2)), DataError);
}

TEST(RbfKernel, Values) {
  std::mt19937_64 rng(3);
  const Eigen::RowVectorXd a = oracle::random_matrix(rng, 1, 4).row(0);
  EXPECT_EQ(rbf_kernel(a, a, 0.7), 1.0);
  Eigen::RowVectorXd u(2), v(2);
  u << 0, 0;
  v << 1, 0;
  EXPECT_NEAR(rbf_kernel(u, v, 1.0), 0.36788, 5e-6);
  for (int t = 0; t < 100; ++t) {
    const Matrix p = oracle::random_matrix(rng, 2, 5);
    const double k = rbf_kernel(p.row(0), p.row(1), 0.3);
    ASSERT_EQ(k, rbf_kernel(p.row(1), p.row(0), 0.3));
    ASSERT_GT(k, 0.0);
    ASSERT_LE(k, 1.0);
  }
}

TEST(FitSvr, DuplicatedSinglePointInsideTube) {
  // gamma "scale" is undefined for zero-variance data, so a fixed gamma is given.
  Matrix x(2, 2);
  x << 1, 2, 1, 2;
  const Vector y = Vector::Constant(2, 5.0);
  SvrConfig c;
  c.gamma = 1.0;
  const auto m = fit_svr(x, y, c);
  EXPECT_TRUE(m.converged);
  EXPECT_LE(std::abs(predict(m, x.topRows(1))(0) - 5.0), c.epsilon + c.tol);
}

TEST(FitSvr, LinearKernelRecoversLine) {
  const Problem p = line(21);
  SvrConfig c;
  c.kernel = Kernel::linear;
  c.C = 1000;
  c.epsilon = 0.01;
  const auto m = fit_svr(p.x, p.y, c);
  EXPECT_TRUE(m.converged);
  Matrix q(5, 1);
  q << -0.93, -0.41, 0.0, 0.37, 0.88;
  const Vector pred = predict(m, q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) EXPECT_NEAR(pred(i), 2.0 * q(i, 0), 0.05);
}

TEST(FitSvr, ZeroEpsilonApproachesLeastSquaresLine) {
  const Problem p = line(15);
  SvrConfig c;
  c.kernel = Kernel::linear;
  c.C = 1e4;
  c.epsilon = 0.0;
  const auto m = fit_svr(p.x, p.y, c);
  const auto [w, b] = oracle::least_squares(p.x, p.y);
  const Vector ls = (p.x * w).array() + b;
  EXPECT_LT((predict(m, p.x) - ls).cwiseAbs().maxCoeff(), 0.05);
}

TEST(FitSvr, KktAuditOnRandomProblem) {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const Problem p = random_problem(seed, 40, 3);
    SvrConfig c;
    c.C = 10;
    c.epsilon = 0.1;
    const auto m = fit_svr(p.x, p.y, c);
    ASSERT_TRUE(m.converged);
    EXPECT_LT(oracle::svr_kkt_violation(m, p.x, p.y), 1e-3) << seed;
  }
}

TEST(FitSvr, FreeSupportVectorsOnTubeEdge) {
  const Problem p = random_problem(7, 60, 2);
  SvrConfig c;
  c.C = 5;
  const auto m = fit_svr(p.x, p.y, c);
  std::size_t free = 0;
  for (Eigen::Index s = 0; s < m.support_vectors.rows(); ++s) {
    const double coef = m.coefficients(s);
    if (std::abs(coef) <= 1e-9 || std::abs(coef) >= c.C - 1e-9) continue;
    ++free;
    Eigen::Index row = 0;
    while ((p.x.row(row) - m.support_vectors.row(s)).squaredNorm() != 0.0) ++row;
    const double r = p.y(row) - predict(m, m.support_vectors.row(s))(0);
    EXPECT_LE(std::abs(r), c.epsilon + c.tol);
    EXPECT_NEAR(std::abs(r), c.epsilon, c.tol);
  }
  EXPECT_GT(free, 0u);
}

TEST(FitSvr, FeasibilityAfterEveryUpdateAndMonotoneDual) {
  const Problem p = random_problem(8, 50, 3);
  SvrConfig c;
  c.C = 3;
  std::size_t updates = 0;
  double prev = -std::numeric_limits<double>::infinity();
  bool box_ok = true, sum_ok = true, mono_ok = true;
  fit_svr(p.x, p.y, c, [&](std::span<const double> a, double dual) {
    ++updates;
    const std::size_t n = a.size() / 2;
    double sum = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      box_ok &= a[k] >= 0.0 && a[k] <= c.C + 1e-9;
      sum += k < n ? a[k] : -a[k];
    }
    sum_ok &= std::abs(sum) < 1e-6;
    mono_ok &= dual >= prev - 1e-10 * std::max(1.0, std::abs(prev));
    prev = dual;
  });
  EXPECT_GT(updates, 0u);
  EXPECT_TRUE(box_ok);
  EXPECT_TRUE(sum_ok);
  EXPECT_TRUE(mono_ok);
}

TEST(FitSvr, ModelInvariants) {
  const Problem p = random_problem(9, 80, 4);
  SvrConfig c;
  c.C = 2;
  const auto m = fit_svr(p.x, p.y, c);
  EXPECT_LT(std::abs(m.coefficients.sum()), 1e-6);
  EXPECT_LE(m.coefficients.cwiseAbs().maxCoeff(), c.C + 1e-9);
  EXPECT_GT(m.support_vectors.rows(), 0);
}

TEST(FitSvr, IterationCapReportedNotThrown) {
  const Problem p = random_problem(10, 60, 3);
  SvrConfig c;
  c.max_passes = 1;
  c.tol = 1e-9;
  const auto m = fit_svr(p.x, p.y, c);
  EXPECT_FALSE(m.converged);
  EXPECT_TRUE(predict(m, p.x).allFinite());
}

TEST(FitSvr, InputErrors) {
  EXPECT_THROW(fit_svr(Matrix::Ones(1, 2), Vector::Ones(1)), DataError);
  EXPECT_THROW(fit_svr(Matrix::Ones(3, 2), Vector::Ones(2)), ShapeError);
  Matrix x = Matrix::Random(3, 2);
  x(0, 0) = INFINITY;
  EXPECT_THROW(fit_svr(x, Vector::Ones(3)), DataError);
  SvrConfig c;
  c.C = 0;
  EXPECT_THROW(fit_svr(Matrix::Random(3, 2), Vector::Ones(3), c), ConfigError);
}

TEST(PredictSvr, ZeroCoefficientsGiveBias) {
  SvrModel m;
  m.support_vectors = Matrix::Random(4, 3);
  m.coefficients = Vector::Zero(4);
  m.bias = -1.25;
  EXPECT_EQ(predict(m, Matrix::Random(6, 3)), Vector::Constant(6, -1.25));
}

TEST(PredictSvr, MatchesKernelSumOracle) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    SvrModel m;
    m.kernel = t % 2 ? Kernel::linear : Kernel::rbf;
    m.gamma = 0.05 + 0.1 * (t % 7);
    m.support_vectors = oracle::random_matrix(rng, 1 + t % 13, 5);
    m.coefficients = oracle::random_vector(rng, m.support_vectors.rows(), 3.0);
    m.bias = oracle::random_vector(rng, 1)(0);
    const Matrix q = oracle::random_matrix(rng, 20, 5);
    const Vector got = predict(m, q);
    for (Eigen::Index i = 0; i < q.rows(); ++i) ASSERT_NEAR(got(i), oracle::svr_decision(m, q.row(i)), 1e-6);
  }
}

TEST(SvrJson, RoundTrip) {
  const Problem p = random_problem(12, 30, 2);
  SvrConfig c;
  c.C = 10;
  const auto m = fit_svr(p.x, p.y, c);
  const auto back = svr_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(predict(back, p.x), predict(m, p.x));
  EXPECT_EQ(back.kernel, m.kernel);
  EXPECT_EQ(back.converged, m.converged);
}
