#pragma once

#include <pems/core.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <variant>
#include <vector>

namespace pems::neighbors {

enum class Algorithm { brute, ball_tree };

inline std::string to_string(Algorithm a) { return a == Algorithm::brute ? "brute" : "ball_tree"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "brute") return Algorithm::brute;
  if (s == "ball_tree") return Algorithm::ball_tree;
  throw ConfigError("knn: unknown algorithm '" + s + "'");
}

struct KnnConfig {
  std::size_t n_neighbors = 4;
  Algorithm algorithm = Algorithm::ball_tree;
  std::size_t leaf_size = 32;
  // Only inverse-distance weighting is supported.

  void validate() const {
    require(n_neighbors >= 1, "knn: n_neighbors must be >= 1");
    require(leaf_size >= 1, "knn: leaf_size must be >= 1");
  }
};

struct Neighbor {
  std::size_t index;
  double distance;
};

// Ordering used everywhere: distance, then lower training index.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

template <class A, class B>
double euclidean(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return std::sqrt((a - b).squaredNorm());
}

namespace detail {

// Bounded max-heap of the k best candidates seen so far.
class KBest {
 public:
  explicit KBest(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  bool full() const { return heap_.size() == k_; }
  const Neighbor& worst() const { return heap_.front(); }

  void offer(const Neighbor& nb) {
    if (!full()) {
      heap_.push_back(nb);
      std::push_heap(heap_.begin(), heap_.end(), closer);
    } else if (closer(nb, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), closer);
      heap_.back() = nb;
      std::push_heap(heap_.begin(), heap_.end(), closer);
    }
  }

  std::vector<Neighbor> sorted() && {
    std::sort_heap(heap_.begin(), heap_.end(), closer);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

inline void check_query(const Matrix& points, Eigen::Index query_dim, std::size_t k) {
  if (query_dim != points.cols()) throw ShapeError("knn: query dimension mismatch");
  if (k < 1) throw ConfigError("knn: k must be >= 1");
  if (k > static_cast<std::size_t>(points.rows()))
    throw ConfigError("knn: k = " + std::to_string(k) + " exceeds the " + std::to_string(points.rows()) +
                      " indexed points");
}

}  // namespace detail

// Exhaustive scan.
class BruteForceIndex {
 public:
  explicit BruteForceIndex(Matrix points) : points_(std::move(points)) {
    if (points_.rows() == 0) throw DataError("knn: empty training set");
  }

  const Matrix& points() const { return points_; }
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }

  template <class Q>
  std::vector<Neighbor> query(const Eigen::MatrixBase<Q>& x, std::size_t k) const {
    detail::check_query(points_, x.size(), k);
    const Eigen::RowVectorXd q = x.derived().reshaped().transpose();
    detail::KBest best(k);
    for (Eigen::Index i = 0; i < points_.rows(); ++i) best.offer({static_cast<std::size_t>(i), euclidean(points_.row(i), q)});
    return std::move(best).sorted();
  }

 private:
  Matrix points_;
};

// Nested bounding hyperspheres. Nodes split on the dimension of largest spread at the
// median; leaves hold at most leaf_size points.
class BallTree {
 public:
  struct Node {
    Eigen::RowVectorXd centroid;
    double radius = 0.0;
    std::size_t begin = 0;  // range in `indices`
    std::size_t end = 0;
    std::int64_t left = -1;
    std::int64_t right = -1;

    bool is_leaf() const { return left < 0; }
  };

  BallTree(Matrix points, std::size_t leaf_size = 32) : points_(std::move(points)), leaf_size_(leaf_size) {
    if (points_.rows() == 0) throw DataError("ball tree: empty training set");
    if (leaf_size_ < 1) throw ConfigError("ball tree: leaf_size must be >= 1");
    indices_.resize(static_cast<std::size_t>(points_.rows()));
    std::iota(indices_.begin(), indices_.end(), std::size_t{0});
    build(0, indices_.size());
  }

  const Matrix& points() const { return points_; }
  std::size_t size() const { return indices_.size(); }
  std::size_t leaf_size() const { return leaf_size_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  // Point indices, grouped so that each node owns indices()[begin, end).
  const std::vector<std::size_t>& indices() const { return indices_; }

  template <class Q>
  std::vector<Neighbor> query(const Eigen::MatrixBase<Q>& x, std::size_t k) const {
    detail::check_query(points_, x.size(), k);
    const Eigen::RowVectorXd q = x.derived().reshaped().transpose();
    detail::KBest best(k);
    search(0, q, best);
    return std::move(best).sorted();
  }

 private:
  std::int64_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.emplace_back();
    Node node;
    node.begin = begin;
    node.end = end;
    node.centroid = Eigen::RowVectorXd::Zero(points_.cols());
    for (std::size_t k = begin; k < end; ++k) node.centroid += points_.row(Eigen::Index(indices_[k]));
    node.centroid /= static_cast<double>(end - begin);
    for (std::size_t k = begin; k < end; ++k)
      node.radius = std::max(node.radius, euclidean(points_.row(Eigen::Index(indices_[k])), node.centroid));

    if (end - begin > leaf_size_) {
      Eigen::Index dim = 0;
      double best_spread = -1.0;
      for (Eigen::Index j = 0; j < points_.cols(); ++j) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t k = begin; k < end; ++k) {
          const double v = points_(Eigen::Index(indices_[k]), j);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        if (hi - lo > best_spread) {
          best_spread = hi - lo;
          dim = j;
        }
      }
      const std::size_t mid = begin + (end - begin) / 2;
      auto first = indices_.begin() + static_cast<std::ptrdiff_t>(begin);
      std::nth_element(first, indices_.begin() + static_cast<std::ptrdiff_t>(mid),
                       indices_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                         const double va = points_(Eigen::Index(a), dim), vb = points_(Eigen::Index(b), dim);
                         return va < vb || (va == vb && a < b);
                       });
      node.left = build(begin, mid);
      node.right = build(mid, end);
    }
    nodes_[static_cast<std::size_t>(id)] = std::move(node);
    return id;
  }

  // Slightly loosened so rounding in the radius can never prune a true neighbour.
  double lower_bound(const Node& node, const Eigen::RowVectorXd& q) const {
    const double to_centre = euclidean(q, node.centroid);
    return std::max(0.0, to_centre - node.radius - 1e-9 * (to_centre + node.radius));
  }

  void search(std::int64_t id, const Eigen::RowVectorXd& q, detail::KBest& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    // Strict comparison keeps equal-distance candidates so index tie-breaking stays exact.
    if (best.full() && lower_bound(node, q) > best.worst().distance) return;
    if (node.is_leaf()) {
      for (std::size_t k = node.begin; k < node.end; ++k) {
        const auto i = indices_[k];
        best.offer({i, euclidean(points_.row(Eigen::Index(i)), q)});
      }
      return;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    if (euclidean(q, l.centroid) <= euclidean(q, r.centroid)) {
      search(node.left, q, best);
      search(node.right, q, best);
    } else {
      search(node.right, q, best);
      search(node.left, q, best);
    }
  }

  Matrix points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> indices_;
  std::vector<Node> nodes_;
};

// Inverse-distance weighted mean of the neighbours' targets. Any zero-distance
// neighbours override the weighting: their plain mean is returned.
inline double weighted_prediction(const std::vector<Neighbor>& nbrs, const Vector& targets) {
  double exact_sum = 0.0;
  std::size_t exact = 0;
  for (const auto& nb : nbrs)
    if (nb.distance == 0.0) {
      exact_sum += targets(Eigen::Index(nb.index));
      ++exact;
    }
  if (exact > 0) return exact_sum / static_cast<double>(exact);
  double num = 0.0, den = 0.0;
  for (const auto& nb : nbrs) {
    const double w = 1.0 / nb.distance;
    num += w * targets(Eigen::Index(nb.index));
    den += w;
  }
  return num / den;
}

// Fitted KNN regressor: the training set plus the configured search backend.
class KnnModel {
 public:
  KnnModel(const Matrix& x, Vector y, const KnnConfig& cfg)
      : targets_(std::move(y)), cfg_(cfg), index_(make_index(x, targets_, cfg)) {}

  const KnnConfig& config() const { return cfg_; }
  const Vector& targets() const { return targets_; }
  const Matrix& points() const {
    return std::visit([](const auto& idx) -> const Matrix& { return idx.points(); }, index_);
  }

  template <class Q>
  std::vector<Neighbor> neighbors(const Eigen::MatrixBase<Q>& x) const {
    return std::visit([&](const auto& idx) { return idx.query(x, cfg_.n_neighbors); }, index_);
  }

  template <class Q>
  double predict_one(const Eigen::MatrixBase<Q>& x) const {
    return weighted_prediction(neighbors(x), targets_);
  }

  Vector predict(const Matrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict_one(x.row(i));
    return out;
  }

 private:
  using Index = std::variant<BruteForceIndex, BallTree>;

  static Index make_index(const Matrix& x, const Vector& y, const KnnConfig& cfg) {
    cfg.validate();
    if (x.rows() != y.size()) throw ShapeError("knn: X rows != y length");
    if (!x.allFinite() || !y.allFinite()) throw DataError("knn: non-finite input");
    if (cfg.algorithm == Algorithm::brute) return Index(std::in_place_type<BruteForceIndex>, x);
    return Index(std::in_place_type<BallTree>, x, cfg.leaf_size);
  }

  Vector targets_;
  KnnConfig cfg_;
  Index index_;
};

// One-shot prediction for a single query row.
template <class Q>
double predict_knn(const Matrix& x_train, const Vector& y_train, const KnnConfig& cfg,
                   const Eigen::MatrixBase<Q>& x) {
  return KnnModel(x_train, y_train, cfg).predict_one(x);
}

}  // namespace pems::neighbors
