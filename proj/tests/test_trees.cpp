#include <pems/trees.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace pems;
using namespace pems::trees;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix x(static_cast<Eigen::Index>(v.size()), 1);
  std::copy(v.begin(), v.end(), x.data());
  return x;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

Vector smooth_target(const Matrix& x) {
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = std::sin(x(i, 0)) + 0.5 * x(i, 1) * x(i, 1) - x(i, 2);
  return y;
}

// Training rows grouped by the leaf they land in.
std::map<std::size_t, std::vector<Eigen::Index>> route(const RegressionTree& t, const Matrix& x) {
  std::map<std::size_t, std::vector<Eigen::Index>> leaves;
  for (Eigen::Index i = 0; i < x.rows(); ++i) leaves[t.leaf_of(x.row(i).data())].push_back(i);
  return leaves;
}

}  // namespace

TEST(Cart, MemorizesDistinctSamples) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(rng, 200, 4);
  const Vector y = oracle::random_vector(rng, 200);
  const auto t = fit_cart(x, y);
  EXPECT_EQ(predict(t, x), y);
}

TEST(Cart, StepDataSplitsAtMidpoint) {
  const Matrix x = column({1, 2, 3, 4});
  const Vector y = vec({0, 0, 10, 10});
  TreeConfig c;
  c.max_depth = 1;
  const auto t = fit_cart(x, y, c);
  ASSERT_EQ(t.nodes.size(), 3u);
  EXPECT_EQ(t.nodes[0].threshold, 2.5);
  const auto s = oracle::best_stump({1, 2, 3, 4}, {0, 0, 10, 10});
  EXPECT_EQ(t.nodes[0].threshold, s.threshold);
  EXPECT_EQ(predict(t, column({2, 3})), vec({0, 10}));
  EXPECT_EQ(predict(t, column({-100, 2.5, 2.50001, 100})), vec({0, 0, 10, 10}));
}

TEST(Cart, StumpMatchesExhaustiveOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = oracle::random_matrix(rng, 30, 1);
    const Vector y = oracle::random_vector(rng, 30);
    TreeConfig c;
    c.max_depth = 1;
    const auto t = fit_cart(x, y, c);
    const auto s = oracle::best_stump({x.data(), x.data() + 30}, {y.data(), y.data() + 30});
    ASSERT_EQ(t.nodes.size(), 3u);
    ASSERT_DOUBLE_EQ(t.nodes[0].threshold, s.threshold);
    ASSERT_NEAR(t.nodes[1].value, s.left_mean, 1e-12);
    ASSERT_NEAR(t.nodes[2].value, s.right_mean, 1e-12);
  }
}

TEST(Cart, ConstantTargetIsSingleLeaf) {
  std::mt19937_64 rng(3);
  const auto t = fit_cart(oracle::random_matrix(rng, 50, 3), Vector::Constant(50, 7.5));
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.nodes[0].value, 7.5);
  EXPECT_EQ(predict(t, Matrix::Random(4, 3)), Vector::Constant(4, 7.5));
}

TEST(Cart, StoppingRulesAndLeafMeans) {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(rng, 500, 5);
  const Vector y = smooth_target(x) + oracle::random_vector(rng, 500, 0.1);
  for (std::size_t leaf : {1u, 3u, 10u})
    for (auto depth : {std::optional<std::size_t>{}, std::optional<std::size_t>{4}})
      for (auto mf : {MaxFeatures::all, MaxFeatures::sqrt}) {
        TreeConfig c;
        c.min_samples_leaf = leaf;
        c.min_samples_split = 5;
        c.max_depth = depth;
        c.max_features = mf;
        c.seed = 9;
        const auto t = fit_cart(x, y, c);
        if (depth) {
          ASSERT_LE(t.depth, *depth);
        }
        const auto leaves = route(t, x);
        std::size_t total = 0;
        for (const auto& [k, rows] : leaves) {
          ASSERT_TRUE(t.nodes[k].is_leaf());
          ASSERT_GE(rows.size(), leaf);
          ASSERT_EQ(rows.size(), t.nodes[k].n_samples);
          double mean = 0;
          for (auto i : rows) mean += y(i);
          mean /= double(rows.size());
          ASSERT_NEAR(t.nodes[k].value, mean, 1e-12 * std::max(1.0, std::abs(mean)));
          total += rows.size();
        }
        ASSERT_EQ(total, 500u);
      }
}

TEST(Cart, DeterministicGivenSeed) {
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(rng, 300, 9);
  const Vector y = smooth_target(x);
  TreeConfig c;
  c.max_features = MaxFeatures::sqrt;
  c.seed = 42;
  std::ostringstream a, b;
  write_tree(a, fit_cart(x, y, c));
  write_tree(b, fit_cart(x, y, c));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Cart, InvariantUnderMonotoneFeatureTransform) {
  // The learned partition is identical; thresholds move with the transform. Fresh queries
  // that fall strictly between two adjacent training values may route differently, since
  // the midpoint is not preserved by a nonlinear map, so the check uses training rows.
  std::mt19937_64 rng(6);
  const Matrix x = oracle::random_matrix(rng, 400, 4);
  const Vector y = smooth_target(x) + oracle::random_vector(rng, 400, 0.2);
  auto transform = [](Matrix m) {
    m.col(0) = (m.col(0) / 3.0).array().exp();
    m.col(1) = m.col(1).array().cube() * 1000.0 + 5.0;
    m.col(3) *= 1e-4;
    return m;
  };
  for (auto mf : {MaxFeatures::all, MaxFeatures::sqrt}) {
    TreeConfig c;
    c.max_features = mf;
    c.min_samples_leaf = 2;
    c.max_depth = 7;
    c.seed = 3;
    const auto a = fit_cart(x, y, c);
    const auto b = fit_cart(transform(x), y, c);
    ASSERT_EQ(a.nodes.size(), b.nodes.size());
    for (std::size_t k = 0; k < a.nodes.size(); ++k) {
      ASSERT_EQ(a.nodes[k].feature, b.nodes[k].feature);
      ASSERT_EQ(a.nodes[k].n_samples, b.nodes[k].n_samples);
      ASSERT_EQ(a.nodes[k].value, b.nodes[k].value);
    }
    EXPECT_EQ(predict(a, x), predict(b, transform(x)));
  }
}

TEST(Cart, InvariantUnderDecreasingTransformWithFeatureSubsampling) {
  // Negation mirrors every split, so children swap places; the per-node feature subset
  // must not depend on the order nodes are grown in.
  std::mt19937_64 rng(16);
  const Matrix x = oracle::random_matrix(rng, 500, 9);
  const Vector y = smooth_target(x) + oracle::random_vector(rng, 500, 0.2);
  TreeConfig c;
  c.max_features = MaxFeatures::sqrt;
  c.min_samples_leaf = 3;
  c.seed = 8;
  const auto a = fit_cart(x, y, c);
  for (Eigen::Index j : {0, 4, 8}) {
    Matrix xt = x;
    xt.col(j) = -2.0 * xt.col(j).array().exp();
    const auto b = fit_cart(xt, y, c);
    EXPECT_EQ(a.nodes.size(), b.nodes.size());
    EXPECT_LT((predict(a, x) - predict(b, xt)).cwiseAbs().maxCoeff(), 1e-9) << j;
  }
}

TEST(Cart, Errors) {
  EXPECT_THROW(fit_cart(Matrix(0, 2), Vector(0)), DataError);
  EXPECT_THROW(fit_cart(Matrix::Ones(3, 2), Vector::Ones(2)), ShapeError);
  TreeConfig c;
  c.min_samples_leaf = 0;
  EXPECT_THROW(fit_cart(Matrix::Ones(3, 2), Vector::Ones(3), c), ConfigError);
  EXPECT_THROW(predict(fit_cart(Matrix::Ones(3, 2), Vector::Ones(3)), Matrix(1, 3)), ShapeError);
}

TEST(Gbt, SingleFullStepRoundEqualsCart) {
  std::mt19937_64 rng(7);
  const Matrix x = oracle::random_matrix(rng, 300, 3);
  const Vector y = smooth_target(x) + oracle::random_vector(rng, 300, 0.3);
  GbtConfig g;
  g.n_estimators = 1;
  g.learning_rate = 1.0;
  g.lambda = 0.0;
  g.max_depth.reset();
  const Matrix q = oracle::random_matrix(rng, 100, 3);
  const Vector a = predict(fit_gbt(x, y, g), q);
  const Vector b = predict(fit_cart(x, y), q);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Gbt, TrainingMseNonIncreasingPerRound) {
  std::mt19937_64 rng(8);
  const Matrix x = oracle::random_matrix(rng, 300, 4);
  const Vector y = smooth_target(x) + oracle::random_vector(rng, 300, 0.3);
  for (double lr : {0.05, 0.3, 1.0}) {
    GbtConfig g;
    g.n_estimators = 60;
    g.learning_rate = lr;
    g.lambda = 0.0;
    g.max_depth = 3;
    double prev = std::numeric_limits<double>::infinity();
    fit_gbt(x, y, g, [&](std::size_t round, const Vector& pred) {
      const double m = (pred - y).squaredNorm() / double(y.size());
      EXPECT_LE(m, prev + 1e-12) << "lr=" << lr << " round=" << round;
      prev = m;
    });
  }
}

TEST(Gbt, LongRunBeatsShortRunOnSmoothTarget) {
  std::mt19937_64 rng(9);
  const Matrix x = oracle::random_matrix(rng, 400, 3);
  const Vector y = smooth_target(x);
  GbtConfig g;
  g.n_estimators = 300;
  g.learning_rate = 0.1;
  g.max_depth = 3;
  std::vector<double> mse(301);
  const auto m = fit_gbt(x, y, g, [&](std::size_t r, const Vector& p) { mse[r] = (p - y).squaredNorm() / 400.0; });
  EXPECT_EQ(m.trees.size(), 300u);
  EXPECT_LT(mse[300], mse[10]);
}

TEST(Gbt, ConstantTargetTreesContributeZero) {
  std::mt19937_64 rng(10);
  const Matrix x = oracle::random_matrix(rng, 50, 2);
  GbtConfig g;
  g.n_estimators = 5;
  g.base_score = 4.0;
  const auto m = fit_gbt(x, Vector::Constant(50, 4.0), g);
  for (const auto& t : m.trees)
    for (const auto& node : t.nodes)
      if (node.is_leaf()) {
        EXPECT_EQ(node.value, 0.0);
      }
  EXPECT_EQ(predict(m, x), Vector::Constant(50, 4.0));
}

TEST(Gbt, PredictArithmetic) {
  GbtModel m;
  m.base_score = 2.5;
  m.n_features = 2;
  EXPECT_EQ(predict(m, Matrix::Random(3, 2)), Vector::Constant(3, 2.5));

  RegressionTree t;
  t.n_features = 1;
  t.nodes.push_back({});
  t.nodes[0].value = 4.0;
  m.trees = {t};
  m.base_score = 1.0;
  m.learning_rate = 0.5;
  m.n_features = 1;
  EXPECT_EQ(predict(m, column({0.0}))(0), 3.0);
}

TEST(Gbt, MatchesNaiveTreeSum) {
  std::mt19937_64 rng(11);
  const Matrix x = oracle::random_matrix(rng, 200, 3);
  GbtConfig g;
  g.n_estimators = 25;
  g.max_depth = 4;
  const auto m = fit_gbt(x, smooth_target(x), g);
  const Matrix q = oracle::random_matrix(rng, 50, 3);
  const Vector got = predict(m, q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double s = 0;
    for (const auto& t : m.trees) {
      std::size_t k = 0;
      while (t.nodes[k].feature >= 0)
        k = std::size_t(q(i, t.nodes[k].feature) <= t.nodes[k].threshold ? t.nodes[k].left : t.nodes[k].right);
      s += t.nodes[k].value;
    }
    ASSERT_NEAR(got(i), m.base_score + m.learning_rate * s, 1e-12);
  }
}

TEST(Gbt, ShrunkLeafWeights) {
  // One split on x, lambda=1: leaves hold sum(r)/(count+1).
  const Matrix x = column({0, 1, 2, 3});
  const Vector y = vec({0, 0, 8, 8});
  GbtConfig g;
  g.n_estimators = 1;
  g.learning_rate = 1.0;
  g.max_depth = 1;
  g.lambda = 1.0;
  const auto m = fit_gbt(x, y, g);
  EXPECT_NEAR(predict(m, column({0}))(0), 4.0 + (-8.0) / 3.0, 1e-12);
  EXPECT_NEAR(predict(m, column({3}))(0), 4.0 + 8.0 / 3.0, 1e-12);
}

TEST(TreeText, RoundTripAndDot) {
  std::mt19937_64 rng(12);
  const Matrix x = oracle::random_matrix(rng, 150, 3);
  GbtConfig g;
  g.n_estimators = 10;
  g.max_depth = 3;
  const auto m = fit_gbt(x, smooth_target(x), g);
  std::stringstream s;
  write_gbt(s, m);
  const auto back = read_gbt(s);
  EXPECT_EQ(predict(back, x), predict(m, x));

  std::istringstream bad("tree 2 1 1\nleaf 1 1\nbogus 3\n");
  EXPECT_THROW(read_tree(bad), DataError);

  const std::string dot = to_dot(m.trees[0], {"a", "b", "c"});
  EXPECT_EQ(dot.rfind("digraph tree {", 0), 0u);
  EXPECT_EQ(std::count(dot.begin(), dot.end(), '\n'),
            std::ptrdiff_t(2 + m.trees[0].nodes.size() + 2 * (m.trees[0].nodes.size() / 2) + 1));
}
