#pragma once

#include <pems/core.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pems::trees {

enum class MaxFeatures { all, sqrt };

struct TreeConfig {
  std::optional<std::size_t> max_depth;  // empty = unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t min_samples_split = 2;
  MaxFeatures max_features = MaxFeatures::all;
  std::uint64_t seed = 0;

  void validate() const {
    require(min_samples_leaf >= 1, "tree: min_samples_leaf must be >= 1");
    require(min_samples_split >= 2, "tree: min_samples_split must be >= 2");
  }
};

// Flat node array; node 0 is the root. Leaves have feature == -1.
struct Node {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
  std::size_t n_samples = 0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<Node> nodes;
  std::size_t depth = 0;
  std::size_t n_features = 0;

  double predict_row(const double* row) const {
    std::size_t k = 0;
    while (!nodes[k].is_leaf())
      k = static_cast<std::size_t>(row[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right);
    return nodes[k].value;
  }

  // Index of the leaf a row is routed to.
  std::size_t leaf_of(const double* row) const {
    std::size_t k = 0;
    while (!nodes[k].is_leaf())
      k = static_cast<std::size_t>(row[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right);
    return k;
  }
};

namespace detail {

// Greedy builder over presorted per-feature index lists. Every node owns the same
// [begin, end) range in each list, kept sorted by that feature through stable partitions.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const Vector& y, const TreeConfig& cfg, double leaf_lambda)
      : x_(x), y_(y), cfg_(cfg), lambda_(leaf_lambda), rng_(cfg.seed) {
    const auto n = static_cast<std::size_t>(x.rows());
    d_ = static_cast<std::size_t>(x.cols());
    order_.assign(d_, std::vector<std::uint32_t>(n));
    for (std::size_t f = 0; f < d_; ++f) {
      auto& ord = order_[f];
      std::iota(ord.begin(), ord.end(), 0u);
      std::stable_sort(ord.begin(), ord.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return x_(a, Eigen::Index(f)) < x_(b, Eigen::Index(f)); });
    }
    goes_left_.assign(n, 0);
    scratch_.resize(n);
    features_.resize(d_);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    n_try_ = cfg.max_features == MaxFeatures::sqrt
                 ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d_))))
                 : d_;
  }

  RegressionTree build() {
    tree_.n_features = d_;
    tree_.nodes.reserve(64);
    grow(0, static_cast<std::size_t>(x_.rows()), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    double gain = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    bool found = false;
  };

  double target(std::uint32_t i) const { return y_(Eigen::Index(i)); }

  // splitmix64 finaliser
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t count = end - begin;
    const auto& any_order = order_[0];
    double sum = 0.0;
    for (std::size_t k = begin; k < end; ++k) sum += target(any_order[k]);
    const double mean = sum / static_cast<double>(count);

    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.back().n_samples = count;
    tree_.nodes.back().value = sum / (static_cast<double>(count) + lambda_);
    tree_.depth = std::max(tree_.depth, depth);

    const bool depth_ok = !cfg_.max_depth || depth < *cfg_.max_depth;
    if (!depth_ok || count < cfg_.min_samples_split || count < 2 * cfg_.min_samples_leaf) return id;

    const Split best = find_split(begin, end, mean);
    if (!best.found) return id;

    // Mark membership, then stable-partition each feature's range.
    std::size_t n_left = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const auto i = order_[best.feature][k];
      const bool left = x_(Eigen::Index(i), Eigen::Index(best.feature)) <= best.threshold;
      goes_left_[i] = left;
      n_left += left;
    }
    for (auto& ord : order_) {
      std::size_t l = begin, r = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto i = ord[k];
        if (goes_left_[i]) ord[l++] = i;
        else scratch_[r++] = i;
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r), ord.begin() + static_cast<std::ptrdiff_t>(l));
    }

    const std::int32_t left = grow(begin, begin + n_left, depth + 1);
    const std::int32_t right = grow(begin + n_left, end, depth + 1);
    Node& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(best.feature);
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  // Squared-error gain G_L^2/(n_L+l) + G_R^2/(n_R+l) - G^2/(n+l)
  // (l = 0 gives plain variance reduction, computed on node-centred targets). Ties keep the earliest feature / lowest threshold.
  Split find_split(std::size_t begin, std::size_t end, double mean) {
    // Centring is exact only for the unregularized gain, which is shift invariant.
    if (lambda_ != 0.0) mean = 0.0;
    const std::size_t count = end - begin;
    const auto nd = static_cast<double>(count);
    double total = 0.0;
    for (std::size_t k = begin; k < end; ++k) total += target(order_[0][k]) - mean;
    const double parent = total * total / (nd + lambda_);

    std::vector<std::size_t> candidates;
    if (n_try_ < d_) {
      // The subset depends only on the seed and on which rows reached this node, so it is
      // unaffected by traversal order and by monotone (even decreasing) feature transforms.
      std::uint64_t rows = 0;
      for (std::size_t k = begin; k < end; ++k) rows += mix64(order_[0][k]);
      rng_.seed(mix64(cfg_.seed ^ mix64(rows + count)));
      std::iota(features_.begin(), features_.end(), std::size_t{0});
      std::shuffle(features_.begin(), features_.end(), rng_);
      candidates = features_;
    } else {
      candidates.resize(d_);
      std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }

    // The first n_try non-constant candidates are evaluated.
    std::vector<std::size_t> evaluated;
    for (const auto f : candidates) {
      if (evaluated.size() >= n_try_) break;
      const auto& ord = order_[f];
      const auto col = Eigen::Index(f);
      if (x_(Eigen::Index(ord[begin]), col) == x_(Eigen::Index(ord[end - 1]), col)) continue;
      evaluated.push_back(f);
    }
    Split best;
    // Evaluate in feature-index order so tie-breaking does not depend on the shuffle.
    std::sort(evaluated.begin(), evaluated.end());
    for (const auto f : evaluated) {
      const auto& ord = order_[f];
      const auto col = Eigen::Index(f);
      double left_sum = 0.0;
      for (std::size_t k = begin; k + 1 < end; ++k) {
        left_sum += target(ord[k]) - mean;
        const std::size_t n_left = k + 1 - begin;
        const std::size_t n_right = count - n_left;
        const double xv = x_(Eigen::Index(ord[k]), col);
        const double xn = x_(Eigen::Index(ord[k + 1]), col);
        if (xv == xn) continue;
        if (n_left < cfg_.min_samples_leaf || n_right < cfg_.min_samples_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / (static_cast<double>(n_left) + lambda_) +
                            right_sum * right_sum / (static_cast<double>(n_right) + lambda_) - parent;
        const double margin = 1e-12 * std::max(1.0, std::abs(best.gain));
        if (!best.found ? gain > 0.0 : gain > best.gain + margin) {
          best.gain = gain;
          best.feature = f;
          double mid = 0.5 * (xv + xn);
          if (!(mid < xn)) mid = xv;  // adjacent doubles
          best.threshold = mid;
          best.found = true;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const Vector& y_;
  TreeConfig cfg_;
  double lambda_;
  std::mt19937_64 rng_;
  std::size_t d_ = 0;
  std::size_t n_try_ = 0;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<std::size_t> features_;
  RegressionTree tree_;
};

inline void check_inputs(const Matrix& x, const Vector& y) {
  if (x.rows() == 0) throw DataError("tree: empty input");
  if (x.rows() != y.size()) throw ShapeError("tree: X rows != y length");
  if (x.cols() == 0) throw DataError("tree: no features");
  if (!x.allFinite() || !y.allFinite()) throw DataError("tree: non-finite input");
}

}  // namespace detail

// CART regression tree: greedy variance-reduction splits at midpoints between
// consecutive distinct values; rows with feature <= threshold go left.
inline RegressionTree fit_cart(const Matrix& x, const Vector& y, const TreeConfig& cfg = {}) {
  cfg.validate();
  detail::check_inputs(x, y);
  return detail::TreeBuilder(x, y, cfg, 0.0).build();
}

inline Vector predict(const RegressionTree& t, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != t.n_features) throw ShapeError("tree: feature count mismatch");
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = t.predict_row(x.row(i).data());
  return out;
}

struct GbtConfig {
  std::size_t n_estimators = 300;
  double learning_rate = 0.1;
  std::optional<std::size_t> max_depth = 8;
  double lambda = 1.0;
  std::optional<double> base_score;  // empty = mean of training targets
  std::size_t min_samples_leaf = 1;

  void validate() const {
    require(n_estimators >= 1, "gbt: n_estimators must be >= 1");
    require(learning_rate > 0.0 && learning_rate <= 1.0, "gbt: learning_rate must lie in (0, 1]");
    require(lambda >= 0.0, "gbt: lambda must be >= 0");
  }
};

struct GbtModel {
  std::vector<RegressionTree> trees;
  double learning_rate = 0.1;
  double base_score = 0.0;
  std::size_t n_features = 0;
};

// Called after each boosting round with the round index (1-based) and current training predictions.
using RoundObserver = std::function<void(std::size_t round, const Vector& train_pred)>;

// Squared-loss Newton boosting: hessians are 1, so each round fits a tree to the
// residuals with leaf weights sum(r) / (count + lambda).
inline GbtModel fit_gbt(const Matrix& x, const Vector& y, const GbtConfig& cfg = {},
                        const RoundObserver& observer = {}) {
  cfg.validate();
  detail::check_inputs(x, y);
  GbtModel m;
  m.learning_rate = cfg.learning_rate;
  m.base_score = cfg.base_score.value_or(y.mean());
  m.n_features = static_cast<std::size_t>(x.cols());
  m.trees.reserve(cfg.n_estimators);

  TreeConfig tc;
  tc.max_depth = cfg.max_depth;
  tc.min_samples_leaf = cfg.min_samples_leaf;
  tc.min_samples_split = std::max<std::size_t>(2, 2 * cfg.min_samples_leaf);

  Vector pred = Vector::Constant(y.size(), m.base_score);
  Vector residual(y.size());
  for (std::size_t round = 1; round <= cfg.n_estimators; ++round) {
    residual = y - pred;
    m.trees.push_back(detail::TreeBuilder(x, residual, tc, cfg.lambda).build());
    const auto& tree = m.trees.back();
    for (Eigen::Index i = 0; i < x.rows(); ++i) pred(i) += cfg.learning_rate * tree.predict_row(x.row(i).data());
    if (observer) observer(round, pred);
  }
  return m;
}

inline Vector predict(const GbtModel& m, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != m.n_features && !m.trees.empty())
    throw ShapeError("gbt: feature count mismatch");
  Vector out = Vector::Constant(x.rows(), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (const auto& t : m.trees) s += t.predict_row(x.row(i).data());
    out(i) = m.base_score + m.learning_rate * s;
  }
  return out;
}

// Text form, one node per line in preorder:
//   tree <n_nodes> <depth> <n_features>
//   split <feature> <threshold> <left> <right> <n_samples>
//   leaf <value> <n_samples>
inline void write_tree(std::ostream& out, const RegressionTree& t) {
  out << "tree " << t.nodes.size() << ' ' << t.depth << ' ' << t.n_features << '\n';
  for (const auto& node : t.nodes) {
    if (node.is_leaf())
      out << "leaf " << format_exact(node.value) << ' ' << node.n_samples << '\n';
    else
      out << "split " << node.feature << ' ' << format_exact(node.threshold) << ' ' << node.left << ' ' << node.right
          << ' ' << node.n_samples << '\n';
  }
}

inline RegressionTree read_tree(std::istream& in) {
  std::string tag;
  std::size_t count = 0;
  RegressionTree t;
  if (!(in >> tag >> count >> t.depth >> t.n_features) || tag != "tree") throw DataError("tree text: bad header");
  t.nodes.resize(count);
  for (auto& node : t.nodes) {
    if (!(in >> tag)) throw DataError("tree text: truncated");
    if (tag == "leaf") {
      in >> node.value >> node.n_samples;
    } else if (tag == "split") {
      in >> node.feature >> node.threshold >> node.left >> node.right >> node.n_samples;
    } else {
      throw DataError("tree text: unknown node tag '" + tag + "'");
    }
    if (!in) throw DataError("tree text: malformed node");
  }
  return t;
}

//   gbt <n_trees> <learning_rate> <base_score> <n_features>
//   followed by each tree in write_tree form
inline void write_gbt(std::ostream& out, const GbtModel& m) {
  out << "gbt " << m.trees.size() << ' ' << format_exact(m.learning_rate) << ' ' << format_exact(m.base_score) << ' '
      << m.n_features << '\n';
  for (const auto& t : m.trees) write_tree(out, t);
}

inline GbtModel read_gbt(std::istream& in) {
  std::string tag;
  std::size_t count = 0;
  GbtModel m;
  if (!(in >> tag >> count >> m.learning_rate >> m.base_score >> m.n_features) || tag != "gbt")
    throw DataError("gbt text: bad header");
  for (std::size_t i = 0; i < count; ++i) m.trees.push_back(read_tree(in));
  return m;
}

// Graphviz export; feature names are optional.
inline std::string to_dot(const RegressionTree& t, const std::vector<std::string>& feature_names = {}) {
  std::ostringstream out;
  out << "digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n";
  for (std::size_t k = 0; k < t.nodes.size(); ++k) {
    const auto& node = t.nodes[k];
    out << "  n" << k << " [label=\"";
    if (node.is_leaf()) {
      out << "value = " << format_sig(node.value) << "\\nsamples = " << node.n_samples;
    } else {
      const auto f = static_cast<std::size_t>(node.feature);
      out << (f < feature_names.size() ? feature_names[f] : "x[" + std::to_string(f) + "]") << " <= "
          << format_sig(node.threshold, 6) << "\\nsamples = " << node.n_samples;
    }
    out << "\"];\n";
    if (!node.is_leaf()) {
      out << "  n" << k << " -> n" << node.left << " [label=\"yes\"];\n";
      out << "  n" << k << " -> n" << node.right << " [label=\"no\"];\n";
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace pems::trees
