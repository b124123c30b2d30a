#pragma once

#include <pems/core.hpp>
#include <pems/dataio.hpp>

#include <json.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>

namespace pems::linear {

struct ElasticNetConfig {
  double alpha = 0.1;
  double l1_ratio = 0.1;
  double tol = 1e-6;
  std::size_t max_iter = 10000;

  void validate() const {
    require(alpha >= 0.0 && std::isfinite(alpha), "elastic net: alpha must be >= 0");
    require(l1_ratio >= 0.0 && l1_ratio <= 1.0, "elastic net: l1_ratio must lie in [0, 1]");
    require(tol > 0.0, "elastic net: tol must be > 0");
    require(max_iter >= 1, "elastic net: max_iter must be >= 1");
  }
};

struct LinearModel {
  Vector weights;
  double intercept = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  ElasticNetConfig config;
};

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

// (1/2n)||y - Xw - b||^2 + alpha*l1*||w||_1 + 0.5*alpha*(1-l1)*||w||^2
inline double elastic_net_objective(const Matrix& x, const Vector& y, const Vector& w, double b,
                                    const ElasticNetConfig& cfg) {
  const double n = static_cast<double>(y.size());
  const Vector r = y - x * w - Vector::Constant(y.size(), b);
  return 0.5 * r.squaredNorm() / n + cfg.alpha * cfg.l1_ratio * w.lpNorm<1>() +
         0.5 * cfg.alpha * (1.0 - cfg.l1_ratio) * w.squaredNorm();
}

// Cyclic coordinate descent with soft-thresholding; the intercept is unpenalized and
// re-centred after every sweep. Stops when the largest coordinate change is below tol.
inline LinearModel fit_elastic_net(const Matrix& x_in, const Vector& y, const ElasticNetConfig& cfg = {}) {
  cfg.validate();
  if (x_in.rows() == 0 || x_in.cols() == 0) throw DataError("elastic net: empty design matrix");
  if (x_in.rows() != y.size()) throw ShapeError("elastic net: X rows != y length");
  if (y.size() < 2) throw DataError("elastic net: need at least 2 samples");
  if (!x_in.allFinite() || !y.allFinite()) throw DataError("elastic net: non-finite input");

  const Eigen::MatrixXd x = x_in;  // column-major for coordinate access
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd sd = ((x.rowwise() - mean).array().square().colwise().sum() * inv_n).sqrt();
    if ((mean.array().abs() > 0.5).any() || (sd.array() < 0.5).any() || (sd.array() > 2.0).any())
      warn("elastic net: features do not look standardized");
  }

  const Vector col_sq = x.colwise().squaredNorm().transpose() * inv_n;
  const double l1 = cfg.alpha * cfg.l1_ratio;
  const double l2 = cfg.alpha * (1.0 - cfg.l1_ratio);

  LinearModel m;
  m.config = cfg;
  m.weights = Vector::Zero(d);
  m.intercept = y.mean();
  Vector r = y.array() - m.intercept;

#ifndef NDEBUG
  double prev_obj = elastic_net_objective(x_in, y, m.weights, m.intercept, cfg);
#endif

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double old = m.weights(j);
      const double denom = col_sq(j) + l2;
      double next = 0.0;
      if (denom > 0.0) {
        const double rho = x.col(j).dot(r) * inv_n + col_sq(j) * old;
        next = soft_threshold(rho, l1) / denom;
      }
      const double delta = next - old;
      if (delta != 0.0) {
        r.noalias() -= delta * x.col(j);
        m.weights(j) = next;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    const double shift = r.mean();
    m.intercept += shift;
    r.array() -= shift;
    max_delta = std::max(max_delta, std::abs(shift));

#ifndef NDEBUG
    const double obj = elastic_net_objective(x_in, y, m.weights, m.intercept, cfg);
    assert(obj <= prev_obj + 1e-10 * std::max(1.0, std::abs(prev_obj)) && "coordinate descent objective increased");
    prev_obj = obj;
#endif

    m.iterations = it;
    if (max_delta < cfg.tol) {
      m.converged = true;
      break;
    }
  }
  return m;
}

inline Vector predict(const LinearModel& m, const Matrix& x) {
  if (x.cols() != m.weights.size())
    throw ShapeError("linear model: expected " + std::to_string(m.weights.size()) + " features, got " +
                     std::to_string(x.cols()));
  return (x * m.weights).array() + m.intercept;
}

inline nlohmann::json to_json(const LinearModel& m) {
  return {{"family", "linear"},
          {"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
          {"intercept", m.intercept},
          {"converged", m.converged},
          {"iterations", m.iterations},
          {"config",
           {{"alpha", m.config.alpha}, {"l1_ratio", m.config.l1_ratio}, {"tol", m.config.tol},
            {"max_iter", m.config.max_iter}}}};
}

inline LinearModel linear_from_json(const nlohmann::json& j) {
  LinearModel m;
  const auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  m.intercept = j.at("intercept").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<std::size_t>();
  const auto& c = j.at("config");
  m.config = {c.at("alpha").get<double>(), c.at("l1_ratio").get<double>(), c.at("tol").get<double>(),
              c.at("max_iter").get<std::size_t>()};
  return m;
}

}  // namespace pems::linear
