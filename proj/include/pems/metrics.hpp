#pragma once

#include <pems/core.hpp>

#include <cmath>
#include <cstddef>
#include <string>

namespace pems::metrics {

namespace detail {
inline void check_pair(const Vector& pred, const Vector& actual) {
  if (pred.size() != actual.size())
    throw ShapeError("metrics: prediction length " + std::to_string(pred.size()) + " != actual length " +
                     std::to_string(actual.size()));
  if (pred.size() == 0) throw DataError("metrics: empty input");
}
}  // namespace detail

// Samples with |actual| below this are excluded from MAPE.
inline constexpr double mape_zero_guard = 1e-8;

inline double mse(const Vector& pred, const Vector& actual) {
  detail::check_pair(pred, actual);
  return (pred - actual).squaredNorm() / static_cast<double>(pred.size());
}

inline double rmse(const Vector& pred, const Vector& actual) { return std::sqrt(mse(pred, actual)); }

inline double mae(const Vector& pred, const Vector& actual) {
  detail::check_pair(pred, actual);
  return (pred - actual).cwiseAbs().sum() / static_cast<double>(pred.size());
}

struct MapeResult {
  double value = 0.0;  // percent
  std::size_t n_excluded = 0;
};

inline MapeResult mape(const Vector& pred, const Vector& actual) {
  detail::check_pair(pred, actual);
  double sum = 0.0;
  std::size_t used = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (std::abs(actual(i)) < mape_zero_guard) continue;
    sum += std::abs((pred(i) - actual(i)) / actual(i));
    ++used;
  }
  if (used == 0) throw DataError("mape: every actual value is (near) zero");
  return {100.0 * sum / static_cast<double>(used), static_cast<std::size_t>(pred.size()) - used};
}

struct MetricReport {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent
  std::size_t n_evaluated = 0;
  std::size_t n_excluded_mape = 0;
};

inline MetricReport evaluate(const Vector& pred, const Vector& actual) {
  MetricReport r;
  r.mse = mse(pred, actual);
  r.rmse = std::sqrt(r.mse);
  r.mae = mae(pred, actual);
  const auto m = mape(pred, actual);
  r.mape = m.value;
  r.n_excluded_mape = m.n_excluded;
  r.n_evaluated = static_cast<std::size_t>(pred.size());
  return r;
}

// Min-max target normalization with training-split statistics.
class TargetNormalizer {
 public:
  TargetNormalizer(double y_min, double y_max) : min_(y_min), max_(y_max) {
    if (!(max_ > min_)) throw DataError("target normalizer: y_max must exceed y_min");
  }

  static TargetNormalizer fit(const Vector& train_targets) {
    if (train_targets.size() == 0) throw DataError("target normalizer: empty training targets");
    return TargetNormalizer(train_targets.minCoeff(), train_targets.maxCoeff());
  }

  double y_min() const { return min_; }
  double y_max() const { return max_; }

  Vector normalize(const Vector& y) const { return (y.array() - min_) / (max_ - min_); }

 private:
  double min_;
  double max_;
};

inline Vector normalize_targets(const TargetNormalizer& norm, const Vector& y) { return norm.normalize(y); }

inline MetricReport evaluate_normalized(const TargetNormalizer& norm, const Vector& pred, const Vector& actual) {
  return evaluate(norm.normalize(pred), norm.normalize(actual));
}

inline std::string csv_header() { return "model,target,mse,rmse,mae,mape,n,n_excluded"; }

// One CSV row, metrics at 5 significant digits.
inline std::string to_csv_row(const std::string& model, const std::string& target, const MetricReport& r) {
  return model + ',' + target + ',' + format_sig(r.mse) + ',' + format_sig(r.rmse) + ',' + format_sig(r.mae) + ',' +
         format_sig(r.mape) + ',' + std::to_string(r.n_evaluated) + ',' + std::to_string(r.n_excluded_mape);
}

}  // namespace pems::metrics
