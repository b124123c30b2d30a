#pragma once

#include <pems/core.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pems {

// Warning sink used by the preprocessing code; defaults to stderr.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

// Time-ordered table of named numeric feature columns plus one target column.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<std::string> feature_names, Matrix features, std::string target_name, Vector target,
          bool time_ordered = true, std::size_t dropped_rows = 0)
      : feature_names_(std::move(feature_names)),
        features_(std::move(features)),
        target_name_(std::move(target_name)),
        target_(std::move(target)),
        time_ordered_(time_ordered),
        dropped_rows_(dropped_rows) {
    if (features_.rows() != target_.size())
      throw ShapeError("dataset: feature rows (" + std::to_string(features_.rows()) + ") != target length (" +
                       std::to_string(target_.size()) + ")");
    if (static_cast<std::size_t>(features_.cols()) != feature_names_.size())
      throw ShapeError("dataset: feature name count does not match column count");
    if (target_.size() < 1) throw DataError("dataset: no rows");
    if (!features_.allFinite() || !target_.allFinite()) throw DataError("dataset: non-finite values");
    for (const auto& name : feature_names_)
      if (name == target_name_) throw DataError("dataset: target '" + name + "' also listed as a feature");
  }

  std::size_t n_rows() const { return static_cast<std::size_t>(target_.size()); }
  std::size_t n_features() const { return feature_names_.size(); }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::string& target_name() const { return target_name_; }
  const Matrix& features() const { return features_; }
  const Vector& target() const { return target_; }
  bool time_ordered() const { return time_ordered_; }
  // Rows removed during ingestion because a selected cell was missing or non-finite.
  std::size_t dropped_rows() const { return dropped_rows_; }

  // Contiguous row range [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > n_rows()) throw DataError("dataset: invalid slice");
    const auto b = static_cast<Eigen::Index>(begin);
    const auto n = static_cast<Eigen::Index>(end - begin);
    return Dataset(feature_names_, features_.middleRows(b, n), target_name_, target_.segment(b, n), time_ordered_);
  }

  Dataset with_features(Matrix features) const {
    return Dataset(feature_names_, std::move(features), target_name_, target_, time_ordered_, dropped_rows_);
  }

 private:
  std::vector<std::string> feature_names_;
  Matrix features_;
  std::string target_name_;
  Vector target_;
  bool time_ordered_ = true;
  std::size_t dropped_rows_ = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

// Empty cells parse as missing (NaN); anything that is not a complete number is rejected.
inline std::optional<double> parse_cell(std::string_view cell) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// Column names from the header row of a CSV file.
inline std::vector<std::string> read_csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  std::vector<std::string> headers;
  for (auto cell : detail::split_commas(line)) headers.emplace_back(cell);
  return headers;
}

// Reads a comma-separated file with a header row. Rows holding a missing or non-finite
// value in any selected column are dropped and counted (see Dataset::dropped_rows).
// When feature_names is empty every non-target column is used, in file order.
inline Dataset load_csv(const std::string& path, const std::string& target_name,
                        const std::vector<std::string>& feature_names = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  std::vector<std::string> headers;
  for (auto cell : detail::split_commas(line)) headers.emplace_back(cell);

  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(headers.begin(), headers.end(), name);
    if (it == headers.end()) return std::nullopt;
    return static_cast<std::size_t>(it - headers.begin());
  };

  const auto target_col = column_of(target_name);
  if (!target_col) throw DataError("'" + path + "': target column '" + target_name + "' not found");

  std::vector<std::string> names;
  std::vector<std::size_t> cols;
  if (feature_names.empty()) {
    for (std::size_t c = 0; c < headers.size(); ++c)
      if (c != *target_col) {
        names.push_back(headers[c]);
        cols.push_back(c);
      }
  } else {
    for (const auto& name : feature_names) {
      const auto c = column_of(name);
      if (!c) throw DataError("'" + path + "': feature column '" + name + "' not found");
      if (*c == *target_col) throw DataError("'" + path + "': target '" + name + "' requested as a feature");
      names.push_back(name);
      cols.push_back(*c);
    }
  }

  std::vector<double> feature_values;
  std::vector<double> target_values;
  std::size_t dropped = 0;
  std::size_t line_no = 1;
  std::vector<double> row(cols.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != headers.size())
      throw DataError("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                      std::to_string(headers.size()) + " cells, found " + std::to_string(cells.size()));
    auto parse = [&](std::size_t c) {
      const auto v = detail::parse_cell(cells[c]);
      if (!v)
        throw DataError("'" + path + "' line " + std::to_string(line_no) + ": non-numeric value '" +
                        std::string(cells[c]) + "' in column '" + headers[c] + "'");
      return *v;
    };
    bool finite = true;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      row[j] = parse(cols[j]);
      finite = finite && std::isfinite(row[j]);
    }
    const double y = parse(*target_col);
    if (!finite || !std::isfinite(y)) {
      ++dropped;
      continue;
    }
    feature_values.insert(feature_values.end(), row.begin(), row.end());
    target_values.push_back(y);
  }

  if (target_values.empty()) throw DataError("'" + path + "': no usable rows");
  const auto n = static_cast<Eigen::Index>(target_values.size());
  const auto d = static_cast<Eigen::Index>(cols.size());
  Matrix x = Eigen::Map<const Matrix>(feature_values.data(), n, d);
  Vector y = Eigen::Map<const Vector>(target_values.data(), n);
  return Dataset(std::move(names), std::move(x), target_name, std::move(y), true, dropped);
}

// Writes features followed by the target column, full precision.
inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& name : ds.feature_names()) out << name << ',';
  out << ds.target_name() << '\n';
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < ds.features().cols(); ++j) out << format_exact(ds.features()(r, j)) << ',';
    out << format_exact(ds.target()(r)) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  void validate() const {
    if (!(train > 0 && val > 0 && test > 0)) throw ConfigError("split ratios must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  }
};

struct DataSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

struct SplitSizes {
  std::size_t train, val, test;
};

// Validation and test sizes are floor(n * ratio); the remainder goes to the training prefix.
inline SplitSizes split_sizes(std::size_t n, const SplitRatios& r) {
  r.validate();
  const auto nd = static_cast<double>(n);
  const auto val = static_cast<std::size_t>(std::floor(nd * r.val + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(nd * r.test + 1e-9));
  if (val + test >= n || val == 0 || test == 0)
    throw DataError("chronological split of " + std::to_string(n) + " rows leaves an empty partition");
  return {n - val - test, val, test};
}

// Order-preserving prefix / middle / suffix partition. No shuffling.
inline DataSplit chronological_split(const Dataset& ds, const SplitRatios& ratios = {}) {
  if (!ds.time_ordered()) throw DataError("chronological split requires a time-ordered dataset");
  const auto s = split_sizes(ds.n_rows(), ratios);
  return {ds.slice(0, s.train), ds.slice(s.train, s.train + s.val), ds.slice(s.train + s.val, ds.n_rows())};
}

// Per-feature standardization z = (x - mean) / std, population std.
// Zero-variance columns get std := 1 (and a warning) so they map to all zeros.
class Scaler {
 public:
  Scaler() = default;
  Scaler(std::vector<std::string> names, Vector means, Vector stds, std::size_t fitted_on)
      : names_(std::move(names)), means_(std::move(means)), stds_(std::move(stds)), fitted_on_(fitted_on) {
    if (means_.size() != stds_.size() || static_cast<std::size_t>(means_.size()) != names_.size())
      throw ShapeError("scaler: inconsistent sizes");
    if ((stds_.array() <= 0.0).any()) throw DataError("scaler: non-positive std");
  }

  static Scaler fit(const Dataset& train) {
    const Matrix& x = train.features();
    const auto n = static_cast<double>(x.rows());
    Vector means = x.colwise().mean().transpose();
    Vector stds(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - means(j)).square().sum() / n;
      double s = std::sqrt(var);
      if (!(s > 1e-12 * std::max(1.0, std::abs(means(j))))) {
        warn("feature '" + train.feature_names()[static_cast<std::size_t>(j)] +
             "' has zero variance on the training split; using std = 1");
        s = 1.0;
      }
      stds(j) = s;
    }
    return Scaler(train.feature_names(), std::move(means), std::move(stds), train.n_rows());
  }

  const std::vector<std::string>& feature_names() const { return names_; }
  const Vector& means() const { return means_; }
  const Vector& stds() const { return stds_; }
  std::size_t fitted_on() const { return fitted_on_; }

  Matrix transform(const Matrix& x) const {
    if (x.cols() != means_.size()) throw ShapeError("scaler: feature count mismatch");
    return ((x.rowwise() - means_.transpose()).array().rowwise() / stds_.transpose().array()).matrix();
  }

  Matrix inverse(const Matrix& z) const {
    if (z.cols() != means_.size()) throw ShapeError("scaler: feature count mismatch");
    return ((z.array().rowwise() * stds_.transpose().array()).matrix().rowwise() + means_.transpose());
  }

  Dataset apply(const Dataset& ds) const {
    check_schema(ds);
    return ds.with_features(transform(ds.features()));
  }

  Dataset invert(const Dataset& ds) const {
    check_schema(ds);
    return ds.with_features(inverse(ds.features()));
  }

 private:
  void check_schema(const Dataset& ds) const {
    if (ds.feature_names() != names_) throw ShapeError("scaler: feature names/order differ from the fitted schema");
  }

  std::vector<std::string> names_;
  Vector means_;
  Vector stds_;
  std::size_t fitted_on_ = 0;
};

// Overlapping windows of w consecutive rows; each window predicts the target at its last row.
struct SequenceDataset {
  std::vector<Matrix> windows;  // each w x d
  Vector targets;
  std::size_t window_len = 0;
  std::size_t n_features = 0;

  std::size_t size() const { return windows.size(); }
};

inline SequenceDataset make_windows(const Matrix& features, const Vector& target, std::size_t w) {
  if (w < 1) throw ConfigError("window length must be >= 1");
  const auto n = static_cast<std::size_t>(features.rows());
  if (w > n)
    throw DataError("window length " + std::to_string(w) + " exceeds series length " + std::to_string(n));
  SequenceDataset out;
  out.window_len = w;
  out.n_features = static_cast<std::size_t>(features.cols());
  const std::size_t count = n - w + 1;
  out.windows.reserve(count);
  out.targets.resize(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    out.windows.emplace_back(features.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(w)));
    out.targets(static_cast<Eigen::Index>(i)) = target(static_cast<Eigen::Index>(i + w - 1));
  }
  return out;
}

inline SequenceDataset make_windows(const Dataset& ds, std::size_t w) {
  return make_windows(ds.features(), ds.target(), w);
}

}  // namespace pems
