#include <pems/neighbors.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace pems;
using namespace pems::neighbors;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix x(static_cast<Eigen::Index>(v.size()), 1);
  std::copy(v.begin(), v.end(), x.data());
  return x;
}

KnnConfig knn(std::size_t k, Algorithm a, std::size_t leaf = 32) {
  KnnConfig c;
  c.n_neighbors = k;
  c.algorithm = a;
  c.leaf_size = leaf;
  return c;
}

void expect_same(const std::vector<Neighbor>& a, const std::vector<Neighbor>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].index, b[i].index) << i;
    ASSERT_EQ(a[i].distance, b[i].distance) << i;
  }
}

}  // namespace

TEST(BallTree, SmallInputIsOneLeaf) {
  std::mt19937_64 rng(1);
  const BallTree t(oracle::random_matrix(rng, 20, 3), 32);
  ASSERT_EQ(t.nodes().size(), 1u);
  EXPECT_TRUE(t.nodes()[0].is_leaf());
  EXPECT_EQ(t.nodes()[0].end - t.nodes()[0].begin, 20u);
}

TEST(BallTree, StructuralInvariants) {
  std::mt19937_64 rng(2);
  for (std::size_t leaf : {1u, 5u, 32u}) {
    const Matrix pts = oracle::random_matrix(rng, 1000, 4);
    const BallTree t(pts, leaf);
    std::vector<int> seen(1000, 0);
    double worst = -INFINITY;
    for (const auto& node : t.nodes()) {
      for (std::size_t k = node.begin; k < node.end; ++k) {
        const auto i = Eigen::Index(t.indices()[k]);
        worst = std::max(worst, (pts.row(i) - node.centroid).norm() - node.radius);
      }
      if (node.is_leaf()) {
        ASSERT_LE(node.end - node.begin, leaf);
        ASSERT_GT(node.end - node.begin, 0u);
        for (std::size_t k = node.begin; k < node.end; ++k) ++seen[t.indices()[k]];
      } else {
        const auto& l = t.nodes()[std::size_t(node.left)];
        const auto& r = t.nodes()[std::size_t(node.right)];
        ASSERT_EQ(l.begin, node.begin);
        ASSERT_EQ(l.end, r.begin);
        ASSERT_EQ(r.end, node.end);
      }
    }
    EXPECT_LE(worst, 1e-9);
    for (int c : seen) ASSERT_EQ(c, 1);
  }
}

TEST(BallTree, EmptyInputRejected) { EXPECT_THROW(BallTree(Matrix(0, 2)), DataError); }

TEST(KnnQuery, TrainingPointIsFirstAtZero) {
  std::mt19937_64 rng(3);
  const Matrix pts = oracle::random_matrix(rng, 100, 3);
  const BallTree t(pts, 8);
  const BruteForceIndex b(pts);
  for (Eigen::Index i : {0, 17, 99}) {
    const auto nb = t.query(pts.row(i), 3);
    EXPECT_EQ(nb[0].index, std::size_t(i));
    EXPECT_EQ(nb[0].distance, 0.0);
    expect_same(nb, b.query(pts.row(i), 3));
  }
}

TEST(KnnQuery, BallTreeMatchesBruteAndOracle) {
  std::mt19937_64 rng(4);
  const Matrix pts = oracle::random_matrix(rng, 1500, 5);
  const BallTree t(pts, 16);
  const BruteForceIndex b(pts);
  for (int q = 0; q < 500; ++q) {
    const Eigen::RowVectorXd x = oracle::random_matrix(rng, 1, 5, 1.2).row(0);
    const std::size_t k = 1 + std::size_t(q % 9);
    const auto got = t.query(x, k);
    expect_same(got, b.query(x, k));
    const auto want = oracle::knn_sorted(pts, x, k);
    for (std::size_t i = 0; i < k; ++i) {
      ASSERT_EQ(got[i].index, want[i].index);
      ASSERT_NEAR(got[i].distance, want[i].distance, 1e-12);
    }
  }
}

TEST(KnnQuery, TiesBrokenByLowerIndex) {
  // Four points equidistant from the origin; duplicated grid data.
  Matrix pts(6, 2);
  pts << 1, 0, 0, 1, -1, 0, 0, -1, 1, 0, 5, 5;
  const Eigen::RowVector2d origin(0, 0);
  for (std::size_t leaf : {1u, 2u, 32u}) {
    const auto nb = BallTree(pts, leaf).query(origin, 4);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(nb[i].index, i) << leaf;
  }
  const auto nb = BruteForceIndex(pts).query(Eigen::RowVector2d(1, 0), 2);
  EXPECT_EQ(nb[0].index, 0u);
  EXPECT_EQ(nb[1].index, 4u);
}

TEST(KnnQuery, CollinearHandExample) {
  const Matrix pts = column({0, 1, 3});
  for (auto a : {Algorithm::brute, Algorithm::ball_tree}) {
    const KnnModel m(pts, Vector::Zero(3), knn(2, a, 1));
    const auto nb = m.neighbors(column({0.9}).row(0));
    ASSERT_EQ(nb.size(), 2u);
    EXPECT_EQ(nb[0].index, 1u);
    EXPECT_EQ(nb[1].index, 0u);
    EXPECT_NEAR(nb[0].distance, 0.1, 1e-12);
    EXPECT_NEAR(nb[1].distance, 0.9, 1e-12);
  }
}

TEST(KnnQuery, KLargerThanTrainingSetIsError) {
  const Matrix pts = column({0, 1, 3});
  EXPECT_THROW(BallTree(pts).query(column({1}).row(0), 4), ConfigError);
  EXPECT_THROW(BruteForceIndex(pts).query(column({1}).row(0), 4), ConfigError);
  EXPECT_THROW(BruteForceIndex(pts).query(Eigen::RowVector2d(1, 1), 1), ShapeError);
}

TEST(KnnPredict, ExactMatchReturnsTarget) {
  std::mt19937_64 rng(5);
  const Matrix pts = oracle::random_matrix(rng, 50, 3);
  const Vector y = oracle::random_vector(rng, 50);
  const KnnModel m(pts, y, knn(4, Algorithm::ball_tree));
  EXPECT_EQ(m.predict_one(pts.row(12)), y(12));

  // Duplicated training point: mean of all zero-distance matches.
  Matrix dup(3, 1);
  dup << 1, 1, 4;
  Vector t(3);
  t << 2, 6, 100;
  EXPECT_EQ(KnnModel(dup, t, knn(3, Algorithm::brute)).predict_one(column({1}).row(0)), 4.0);
}

TEST(KnnPredict, InverseDistanceHandValue) {
  Matrix pts = column({1, -3});
  Vector y(2);
  y << 0, 8;
  for (auto a : {Algorithm::brute, Algorithm::ball_tree})
    EXPECT_NEAR(KnnModel(pts, y, knn(2, a)).predict_one(column({0}).row(0)), 2.0, 1e-12);
}

TEST(KnnPredict, ConstantTargetsGiveConstant) {
  std::mt19937_64 rng(6);
  const Matrix pts = oracle::random_matrix(rng, 80, 2);
  const KnnModel m(pts, Vector::Constant(80, 3.25), knn(5, Algorithm::ball_tree));
  const Vector p = m.predict(oracle::random_matrix(rng, 30, 2));
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p(i), 3.25, 1e-12);
}

TEST(KnnPredict, BackendsAgreeOnRandomDatasets) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = Eigen::Index(10 + (rng() % 1990));
    const auto d = Eigen::Index(1 + rng() % 6);
    const Matrix pts = oracle::random_matrix(rng, n, d);
    const Vector y = oracle::random_vector(rng, n);
    const std::size_t k = 1 + rng() % 8;
    const Matrix q = oracle::random_matrix(rng, 50, d);
    const Vector a = KnnModel(pts, y, knn(k, Algorithm::brute)).predict(q);
    const Vector b = KnnModel(pts, y, knn(k, Algorithm::ball_tree, 1 + rng() % 40)).predict(q);
    ASSERT_EQ(a, b) << trial;
  }
}

TEST(KnnPredict, ConvexCombinationOfNeighbourTargets) {
  std::mt19937_64 rng(8);
  const Matrix pts = oracle::random_matrix(rng, 300, 3);
  const Vector y = oracle::random_vector(rng, 300, 5.0);
  const KnnModel m(pts, y, knn(6, Algorithm::ball_tree));
  for (int q = 0; q < 200; ++q) {
    const Eigen::RowVectorXd x = oracle::random_matrix(rng, 1, 3).row(0);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& nb : m.neighbors(x)) {
      lo = std::min(lo, y(Eigen::Index(nb.index)));
      hi = std::max(hi, y(Eigen::Index(nb.index)));
    }
    const double p = m.predict_one(x);
    ASSERT_GE(p, lo - 1e-12);
    ASSERT_LE(p, hi + 1e-12);
  }
}

TEST(KnnPredict, UniformScalingLeavesPredictionsUnchanged) {
  std::mt19937_64 rng(9);
  const Matrix pts = oracle::random_matrix(rng, 400, 4);
  const Vector y = oracle::random_vector(rng, 400);
  const Matrix q = oracle::random_matrix(rng, 100, 4);
  for (double c : {0.001, 4.0, 1000.0}) {
    const KnnModel a(pts, y, knn(4, Algorithm::ball_tree));
    const KnnModel b(c * pts, y, knn(4, Algorithm::ball_tree));
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      const auto na = a.neighbors(q.row(i));
      const auto nb = b.neighbors((c * q.row(i)).eval());
      for (std::size_t j = 0; j < na.size(); ++j) ASSERT_EQ(na[j].index, nb[j].index);
    }
    const Vector pa = a.predict(q), pb = b.predict(c * q);
    EXPECT_LT((pa - pb).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(KnnPredict, Errors) {
  EXPECT_THROW(KnnModel(Matrix::Ones(3, 2), Vector::Ones(2), knn(1, Algorithm::brute)), ShapeError);
  EXPECT_THROW(KnnModel(Matrix::Ones(3, 2), Vector::Ones(3), knn(0, Algorithm::brute)), ConfigError);
  EXPECT_THROW(KnnModel(Matrix(0, 2), Vector(0), knn(1, Algorithm::ball_tree)), DataError);
  EXPECT_THROW(parse_algorithm("kd_tree"), ConfigError);
}
