#pragma once

#include <pems/core.hpp>
#include <pems/dataio.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <list>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace pems::svr {

enum class Kernel { rbf, linear };

inline std::string to_string(Kernel k) { return k == Kernel::rbf ? "rbf" : "linear"; }

inline Kernel parse_kernel(const std::string& s) {
  if (s == "rbf") return Kernel::rbf;
  if (s == "linear") return Kernel::linear;
  throw ConfigError("svr: unknown kernel '" + s + "'");
}

struct SvrConfig {
  double C = 100.0;
  Kernel kernel = Kernel::rbf;
  std::optional<double> gamma;  // empty = "scale"
  double epsilon = 0.1;
  double tol = 1e-3;
  // Cap on SMO pair updates, in multiples of the training-set size.
  std::size_t max_passes = 200;
  // Kernel rows are cached up to this many bytes and recomputed beyond it.
  std::size_t cache_bytes = std::size_t{256} << 20;

  void validate() const {
    require(C > 0.0 && std::isfinite(C), "svr: C must be > 0");
    require(epsilon >= 0.0, "svr: epsilon must be >= 0");
    require(!gamma || *gamma > 0.0, "svr: gamma must be > 0");
    require(tol > 0.0, "svr: tol must be > 0");
    require(max_passes >= 1, "svr: max_passes must be >= 1");
  }
};

struct SvrModel {
  Matrix support_vectors;
  Vector coefficients;  // alpha_i - alpha_i^*, each in [-C, C]
  double bias = 0.0;
  Kernel kernel = Kernel::rbf;
  double gamma = 1.0;
  double C = 1.0;
  double epsilon = 0.1;
  bool converged = false;
  std::size_t iterations = 0;
};

// 1 / (d * mean per-feature population variance).
inline double gamma_scale(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) throw DataError("gamma_scale: empty input");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double mean_var =
      (x.rowwise() - mean).array().square().colwise().sum().mean() / static_cast<double>(x.rows());
  if (!(mean_var > 0.0)) throw DataError("gamma_scale: every feature has zero variance");
  return 1.0 / (static_cast<double>(x.cols()) * mean_var);
}

template <class A, class B>
double rbf_kernel(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

template <class A, class B>
double kernel_value(Kernel k, const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, double gamma) {
  return k == Kernel::rbf ? rbf_kernel(a, b, gamma) : a.dot(b);
}

namespace detail {

// Kernel rows K(i, .) over the training set, cached with LRU eviction.
class KernelRows {
 public:
  KernelRows(const Matrix& x, Kernel kernel, double gamma, std::size_t cache_bytes)
      : x_(x), kernel_(kernel), gamma_(gamma), sq_norms_(x.rowwise().squaredNorm()) {
    const std::size_t row_bytes = sizeof(double) * static_cast<std::size_t>(x.rows());
    capacity_ = std::max<std::size_t>(2, cache_bytes / std::max<std::size_t>(row_bytes, 1));
  }

  const Vector& row(Eigen::Index i) {
    if (auto it = index_.find(i); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    if (lru_.size() >= capacity_) {
      index_.erase(lru_.back().first);
      lru_.pop_back();
    }
    lru_.emplace_front(i, compute(i));
    index_[i] = lru_.begin();
    return lru_.front().second;
  }

 private:
  Vector compute(Eigen::Index i) const {
    Vector dots = x_ * x_.row(i).transpose();
    if (kernel_ == Kernel::linear) return dots;
    return (-gamma_ * ((sq_norms_.array() + sq_norms_(i)) - 2.0 * dots.array()).max(0.0)).exp().matrix();
  }

  const Matrix& x_;
  Kernel kernel_;
  double gamma_;
  Vector sq_norms_;
  std::size_t capacity_;
  std::list<std::pair<Eigen::Index, Vector>> lru_;
  std::unordered_map<Eigen::Index, std::list<std::pair<Eigen::Index, Vector>>::iterator> index_;
};

}  // namespace detail

// Called after every SMO update with the 2n dual variables (alpha then alpha^*) and the
// dual objective in maximisation form.
using SmoObserver = std::function<void(std::span<const double> alphas, double dual_objective)>;

// epsilon-SVR trained by SMO on the 2n-variable dual. The first working index is the
// maximal KKT violator, the second maximises the second-order objective gain.
// Non-convergence within max_passes is reported through `converged`.
inline SvrModel fit_svr(const Matrix& x, const Vector& y, const SvrConfig& cfg = {},
                        const SmoObserver& observer = {}) {
  cfg.validate();
  if (x.rows() != y.size()) throw ShapeError("svr: X rows != y length");
  if (x.rows() < 2) throw DataError("svr: need at least 2 samples");
  if (!x.allFinite() || !y.allFinite()) throw DataError("svr: non-finite input");

  const Eigen::Index n = x.rows();
  const Eigen::Index m = 2 * n;
  const double gamma = cfg.gamma ? *cfg.gamma : cfg.kernel == Kernel::rbf ? gamma_scale(x) : 1.0;
  const double C = cfg.C;
  constexpr double tau = 1e-12;

  auto sign = [n](Eigen::Index k) { return k < n ? 1.0 : -1.0; };
  auto sample = [n](Eigen::Index k) { return k < n ? k : k - n; };

  detail::KernelRows rows(x, cfg.kernel, gamma, cfg.cache_bytes);
  Vector diag(n);
  for (Eigen::Index i = 0; i < n; ++i) diag(i) = kernel_value(cfg.kernel, x.row(i), x.row(i), gamma);

  std::vector<double> beta(static_cast<std::size_t>(m), 0.0);
  Vector p(m);
  p.head(n) = cfg.epsilon - y.array();
  p.tail(n) = cfg.epsilon + y.array();
  Vector grad = p;

  auto in_up = [&](Eigen::Index k) {
    const double b = beta[static_cast<std::size_t>(k)];
    return k < n ? b < C : b > 0.0;
  };
  auto in_low = [&](Eigen::Index k) {
    const double b = beta[static_cast<std::size_t>(k)];
    return k < n ? b > 0.0 : b < C;
  };
  auto dual_objective = [&] {
    double f = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) f += beta[static_cast<std::size_t>(k)] * (grad(k) + p(k));
    return -0.5 * f;
  };

  SvrModel model;
  const std::size_t max_iter = cfg.max_passes * static_cast<std::size_t>(n);
  std::size_t iter = 0;
  for (; iter < max_iter; ++iter) {
    // i: maximal violator in I_up. j: best second-order gain among I_low violators.
    Eigen::Index i = -1, j = -1;
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k) {
      const double v = -sign(k) * grad(k);
      if (in_up(k) && v > g_max) {
        g_max = v;
        i = k;
      }
    }
    if (i >= 0) {
      const Vector& ki = rows.row(sample(i));
      const double kii = diag(sample(i));
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < m; ++k) {
        if (!in_low(k)) continue;
        const double v = -sign(k) * grad(k);
        g_min = std::min(g_min, v);
        const double b = g_max - v;
        if (b <= 0.0) continue;
        double a = kii + diag(sample(k)) - 2.0 * ki(sample(k));
        if (a <= 0.0) a = tau;
        const double gain = -b * b / a;
        if (gain < best) {
          best = gain;
          j = k;
        }
      }
    }
    if (i < 0 || j < 0 || g_max - g_min < cfg.tol) {
      model.converged = true;
      break;
    }

    const double si = sign(i), sj = sign(j);
    const Vector& ki = rows.row(sample(i));
    const Vector& kj = rows.row(sample(j));
    const double qii = diag(sample(i));
    const double qjj = diag(sample(j));
    const double qij = si * sj * ki(sample(j));
    double& ai = beta[static_cast<std::size_t>(i)];
    double& aj = beta[static_cast<std::size_t>(j)];
    const double old_ai = ai, old_aj = aj;

    if (si != sj) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) {
          aj = 0.0;
          ai = diff;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = -diff;
      }
      if (diff > 0.0) {
        if (ai > C) {
          ai = C;
          aj = C - diff;
        }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) {
          ai = C;
          aj = sum - C;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > C) {
        if (aj > C) {
          aj = C;
          ai = sum - C;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
    }

    // Q(k, i) = s_k s_i K(k, i); both halves of the gradient share the kernel row.
    const double di = (ai - old_ai) * si;
    const double dj = (aj - old_aj) * sj;
    const Vector shift = di * ki + dj * kj;
    grad.head(n) += shift;
    grad.tail(n) -= shift;

    if (observer) observer(std::span<const double>(beta), dual_objective());
  }
  model.iterations = iter;

  // Bias from free variables, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double yg = sign(k) * grad(k);
    const double b = beta[static_cast<std::size_t>(k)];
    if (b >= C) {
      if (sign(k) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (b <= 0.0) {
      if (sign(k) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);

  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < n; ++i)
    if (beta[static_cast<std::size_t>(i)] - beta[static_cast<std::size_t>(i + n)] != 0.0) support.push_back(i);

  const auto ns = static_cast<Eigen::Index>(support.size());
  model.support_vectors.resize(ns, x.cols());
  model.coefficients.resize(ns);
  for (Eigen::Index s = 0; s < ns; ++s) {
    const auto i = support[static_cast<std::size_t>(s)];
    model.support_vectors.row(s) = x.row(i);
    model.coefficients(s) = beta[static_cast<std::size_t>(i)] - beta[static_cast<std::size_t>(i + n)];
  }
  model.bias = -rho;
  model.kernel = cfg.kernel;
  model.gamma = gamma;
  model.C = C;
  model.epsilon = cfg.epsilon;
  return model;
}

inline Vector predict(const SvrModel& m, const Matrix& x) {
  if (m.support_vectors.rows() > 0 && x.cols() != m.support_vectors.cols())
    throw ShapeError("svr: feature count mismatch");
  Vector out = Vector::Constant(x.rows(), m.bias);
  if (m.support_vectors.rows() == 0) return out;
  const Eigen::MatrixXd dots = x * m.support_vectors.transpose();
  if (m.kernel == Kernel::linear) return out + dots * m.coefficients;
  const Vector xn = x.rowwise().squaredNorm();
  const Eigen::RowVectorXd sn = m.support_vectors.rowwise().squaredNorm().transpose();
  Eigen::MatrixXd k = ((-2.0 * dots).colwise() + xn).rowwise() + sn;
  k = (-m.gamma * k.array().max(0.0)).exp().matrix();
  return out + k * m.coefficients;
}

inline nlohmann::json to_json(const SvrModel& m) {
  std::vector<std::vector<double>> sv;
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i)
    sv.emplace_back(m.support_vectors.row(i).data(), m.support_vectors.row(i).data() + m.support_vectors.cols());
  return {{"family", "svr"},
          {"kernel", to_string(m.kernel)},
          {"gamma", m.gamma},
          {"C", m.C},
          {"epsilon", m.epsilon},
          {"bias", m.bias},
          {"converged", m.converged},
          {"iterations", m.iterations},
          {"n_features", m.support_vectors.cols()},
          {"coefficients", std::vector<double>(m.coefficients.data(), m.coefficients.data() + m.coefficients.size())},
          {"support_vectors", sv}};
}

inline SvrModel svr_from_json(const nlohmann::json& j) {
  SvrModel m;
  m.kernel = parse_kernel(j.at("kernel").get<std::string>());
  m.gamma = j.at("gamma").get<double>();
  m.C = j.at("C").get<double>();
  m.epsilon = j.at("epsilon").get<double>();
  m.bias = j.at("bias").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<std::size_t>();
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  const auto sv = j.at("support_vectors").get<std::vector<std::vector<double>>>();
  const auto d = j.at("n_features").get<Eigen::Index>();
  m.coefficients = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), d);
  for (std::size_t i = 0; i < sv.size(); ++i)
    m.support_vectors.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(sv[i].data(), static_cast<Eigen::Index>(sv[i].size()));
  return m;
}

}  // namespace pems::svr
