#pragma once

// Experiment pipeline: data -> chronological split -> train-only preprocessing ->
// per-family grid search on validation MSE -> test evaluation -> leaderboard.

#include <pems/bench/models.hpp>
#include <pems/metrics.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace pems::bench {

struct FamilyGrid {
  Family family;
  std::vector<Bundle> bundles;
};

struct ExperimentConfig {
  std::optional<std::string> csv_path;  // empty = synthetic data
  std::vector<std::string> csv_features;  // empty = every non-target column
  SyntheticSpec synthetic;
  Pollutant target = Pollutant::nox;
  SplitRatios split;
  std::size_t window_len = 8;
  std::vector<FamilyGrid> grids;  // kept in leaderboard order
  std::uint64_t seed = 1;
  std::string out_dir = "results";

  void validate() const {
    require(!grids.empty(), "experiment: no model family enabled");
    for (const auto& g : grids) require(!g.bundles.empty(), "experiment: empty grid for " + to_string(g.family));
    require(window_len >= 1, "experiment: window_len must be >= 1");
    split.validate();
    if (!csv_path) synthetic.validate();
  }
};

// Default grids: the reported bundle for the target first, then a small neighbourhood.
// Recurrent nets and SVR get only the reported bundle because each fit takes minutes.
inline std::vector<Bundle> default_grid(Family f, Pollutant target) {
  const Bundle reported = reported_bundle(f, target);
  auto with = [&](std::initializer_list<std::pair<std::string, std::string>> changes) {
    Bundle b = reported;
    for (const auto& [k, v] : changes) {
      bool found = false;
      for (auto& kv : b)
        if (kv.first == k) {
          kv.second = v;
          found = true;
        }
      if (!found) b.emplace_back(k, v);
    }
    return b;
  };
  switch (f) {
    case Family::linear:
      return {reported, with({{"alpha", "0.01"}}), with({{"alpha", "1"}}), with({{"l1_ratio", "0.5"}})};
    case Family::cart:
      return {reported, with({{"max_depth", "12"}}), with({{"max_features", "all"}})};
    case Family::gbt:
      return {reported, with({{"learning_rate", "0.05"}})};
    case Family::knn: return {reported, with({{"n_neighbors", "8"}}), with({{"n_neighbors", "2"}})};
    case Family::mlp: return {reported, with({{"learning_rate", "0.001"}})};
    default: return {reported};
  }
}

inline ExperimentConfig default_config(Pollutant target = Pollutant::nox) {
  ExperimentConfig cfg;
  cfg.target = target;
  for (auto f : all_families) cfg.grids.push_back({f, default_grid(f, target)});
  return cfg;
}

namespace detail {

inline std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Cartesian product of per-key value lists; the first key varies slowest.
inline std::vector<Bundle> expand_grid(const Bundle& base, const std::vector<std::pair<std::string, std::vector<std::string>>>& axes) {
  std::vector<Bundle> out{base};
  for (const auto& [key, values] : axes) {
    std::vector<Bundle> next;
    for (const auto& b : out)
      for (const auto& v : values) {
        Bundle c = b;
        bool found = false;
        for (auto& kv : c)
          if (kv.first == key) {
            kv.second = v;
            found = true;
          }
        if (!found) c.emplace_back(key, v);
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  return out;
}

}  // namespace detail

// Reads an INI experiment file. Sections and keys (all optional):
//   [data]        source = synthetic | csv, path, features = a, b, ..., rows, noise_std,
//                 regimes, target = co | nox
//   [split]       train, val, test, window_len
//   [experiment]  seed, out, families = linear, svr, ...
//   [grid.NAME]   hyperparameter = v1, v2, ...  (grid = Cartesian product over keys;
//                 unlisted keys keep the family's reported value for the target)
// Unknown sections or keys are errors. See docs/config.md.
// `target` overrides [data] target before the default grids are chosen.
inline ExperimentConfig load_config(const std::string& path, std::optional<Pollutant> target = std::nullopt) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }

  ExperimentConfig cfg;
  std::vector<Family> enabled(all_families.begin(), all_families.end());
  std::vector<std::pair<Family, std::vector<std::pair<std::string, std::vector<std::string>>>>> grid_axes;

  auto unknown = [&](const std::string& where, const std::string& key) {
    throw ConfigError("config: unknown key '" + key + "' in [" + where + "]");
  };
  std::string source = "synthetic";
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside any section");
    if (section == "data") {
      for (const auto& [k, v] : body) {
        const std::string val = detail::trim_copy(v.data());
        if (k == "source") source = val;
        else if (k == "path") cfg.csv_path = val;
        else if (k == "features") cfg.csv_features = detail::split_list(val);
        else if (k == "rows") cfg.synthetic.n_rows = detail::to_count(k, val);
        else if (k == "noise_std") cfg.synthetic.noise_std = detail::to_double(k, val);
        else if (k == "regimes") cfg.synthetic.regimes = detail::to_count(k, val);
        else if (k == "target") cfg.target = parse_pollutant(val);
        else unknown(section, k);
      }
    } else if (section == "split") {
      for (const auto& [k, v] : body) {
        const std::string val = detail::trim_copy(v.data());
        if (k == "train") cfg.split.train = detail::to_double(k, val);
        else if (k == "val") cfg.split.val = detail::to_double(k, val);
        else if (k == "test") cfg.split.test = detail::to_double(k, val);
        else if (k == "window_len") cfg.window_len = detail::to_count(k, val);
        else unknown(section, k);
      }
    } else if (section == "experiment") {
      for (const auto& [k, v] : body) {
        const std::string val = detail::trim_copy(v.data());
        if (k == "seed") cfg.seed = detail::to_count(k, val);
        else if (k == "out") cfg.out_dir = val;
        else if (k == "families") {
          enabled.clear();
          for (const auto& name : detail::split_list(val)) enabled.push_back(parse_family(name));
        } else unknown(section, k);
      }
    } else if (section.rfind("grid.", 0) == 0) {
      const Family f = parse_family(section.substr(5));
      std::vector<std::pair<std::string, std::vector<std::string>>> axes;
      for (const auto& [k, v] : body) {
        auto values = detail::split_list(v.data());
        if (values.empty()) throw ConfigError("config: empty value list for " + section + "." + k);
        axes.emplace_back(k, std::move(values));
      }
      grid_axes.emplace_back(f, std::move(axes));
    } else {
      throw ConfigError("config: unknown section [" + section + "]");
    }
  }

  if (target) cfg.target = *target;
  if (source == "csv") {
    if (!cfg.csv_path) throw ConfigError("config: source = csv needs a path");
  } else if (source == "synthetic") {
    cfg.csv_path.reset();
  } else {
    throw ConfigError("config: source must be synthetic or csv");
  }

  for (auto f : all_families) {
    if (std::find(enabled.begin(), enabled.end(), f) == enabled.end()) continue;
    std::vector<Bundle> bundles = default_grid(f, cfg.target);
    for (const auto& [gf, axes] : grid_axes)
      if (gf == f) bundles = detail::expand_grid(reported_bundle(f, cfg.target), axes);
    for (const auto& b : bundles) validate_bundle(f, b);
    cfg.grids.push_back({f, std::move(bundles)});
  }
  cfg.validate();
  return cfg;
}

// ---- data preparation -------------------------------------------------------------

// One split in every representation a family might need.
struct SplitViews {
  Matrix raw;
  Matrix standardized;
  SequenceDataset windows;  // one window per row; early rows borrow context from preceding splits
  Vector target;

  ModelInput input(InputKind k) const {
    if (k == InputKind::raw) return {&raw, nullptr};
    if (k == InputKind::standardized) return {&standardized, nullptr};
    return {nullptr, &windows};
  }
};

struct PreparedData {
  DataSplit split;
  Scaler scaler;
  metrics::TargetNormalizer normalizer{0.0, 1.0};
  SplitViews train, val, test;
  std::size_t window_len = 1;
};

// Instrumentation for tests and logging. All callbacks are optional.
struct ExperimentHooks {
  std::function<void(const Dataset& fitted_on)> scaler_fit;
  std::function<void(const Vector& fitted_on)> normalizer_fit;
  std::function<void(Family, InputKind, const ModelInput& train_input)> model_fit;
  std::function<void(const std::string&)> log;
};

namespace detail {

// Windows ending at every row of `rows`, preceded by `context` (the tail of earlier rows).
inline SequenceDataset windows_with_context(const Matrix& context, const Matrix& rows, const Vector& y, std::size_t w) {
  const auto ctx = static_cast<Eigen::Index>(w - 1);
  if (context.rows() < ctx) throw DataError("windowing: not enough preceding rows for window length " + std::to_string(w));
  Matrix all(ctx + rows.rows(), rows.cols());
  all << context.bottomRows(ctx), rows;
  Vector yy = Vector::Zero(all.rows());
  yy.tail(y.size()) = y;
  return make_windows(all, yy, w);
}

}  // namespace detail

inline PreparedData prepare(const Dataset& ds, const SplitRatios& ratios, std::size_t w, const ExperimentHooks& hooks = {}) {
  PreparedData p;
  p.window_len = w;
  p.split = chronological_split(ds, ratios);
  if (p.split.train.n_rows() < w)
    throw DataError("training split (" + std::to_string(p.split.train.n_rows()) + " rows) is shorter than window length");

  p.scaler = Scaler::fit(p.split.train);
  if (hooks.scaler_fit) hooks.scaler_fit(p.split.train);
  p.normalizer = metrics::TargetNormalizer::fit(p.split.train.target());
  if (hooks.normalizer_fit) hooks.normalizer_fit(p.split.train.target());

  auto views = [&](const Dataset& d) {
    SplitViews v;
    v.raw = d.features();
    v.standardized = p.scaler.transform(d.features());
    v.target = d.target();
    return v;
  };
  p.train = views(p.split.train);
  p.val = views(p.split.val);
  p.test = views(p.split.test);

  // Training windows start at row w-1; later splits take context from what precedes them.
  p.train.windows = make_windows(p.train.standardized, p.train.target, w);
  Matrix before_test(p.train.standardized.rows() + p.val.standardized.rows(), p.train.standardized.cols());
  before_test << p.train.standardized, p.val.standardized;
  p.val.windows = detail::windows_with_context(p.train.standardized, p.val.standardized, p.val.target, w);
  p.test.windows = detail::windows_with_context(before_test, p.test.standardized, p.test.target, w);
  return p;
}

// Targets aligned with a family's training samples (windows drop the first w-1 rows).
inline const Vector& fit_targets(const SplitViews& v, InputKind k) {
  return k == InputKind::windows ? v.windows.targets : v.target;
}

// ---- grid search ------------------------------------------------------------------

struct BundleOutcome {
  Bundle params;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // non-empty when training or evaluation failed
};

struct GridResult {
  std::size_t best_index = 0;
  Bundle best_params;
  double val_mse = std::numeric_limits<double>::infinity();
  std::vector<BundleOutcome> outcomes;
  std::optional<TrainedModel> model;
};

// Trains every bundle on `train`, scores MSE on `val`, keeps the first minimum. Failed
// bundles are recorded and skipped; if none succeeds the search throws.
inline GridResult grid_search(Family f, const std::vector<Bundle>& grid, const SplitViews& train, const SplitViews& val,
                              std::uint64_t seed, const ExperimentHooks& hooks = {}) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid for " + to_string(f));
  const InputKind kind = input_kind(f);
  GridResult res;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    BundleOutcome out{grid[i], std::numeric_limits<double>::quiet_NaN(), {}};
    try {
      const ModelInput in = train.input(kind);
      if (hooks.model_fit) hooks.model_fit(f, kind, in);
      TrainedModel m = fit_model(f, grid[i], in, fit_targets(train, kind), seed);
      const Vector pred = m.predict(val.input(kind));
      if (!pred.allFinite()) throw DataError("non-finite validation predictions");
      out.val_mse = metrics::mse(pred, val.target);
      if (hooks.log) hooks.log(to_string(f) + " [" + format_bundle(grid[i]) + "] val_mse=" + format_sig(out.val_mse));
      if (!res.model || out.val_mse < res.val_mse) {
        res.best_index = i;
        res.val_mse = out.val_mse;
        res.best_params = grid[i];
        res.model.emplace(std::move(m));
      }
    } catch (const std::exception& e) {
      out.error = e.what();
      if (hooks.log) hooks.log(to_string(f) + " [" + format_bundle(grid[i]) + "] failed: " + e.what());
    }
    res.outcomes.push_back(std::move(out));
  }
  if (!res.model) throw Error("grid_search: every bundle failed for " + to_string(f) + " (first error: " + res.outcomes.front().error + ")");
  return res;
}

// ---- leaderboard ------------------------------------------------------------------

struct LeaderboardRow {
  std::string model;
  std::string target;
  metrics::MetricReport normalized;
  metrics::MetricReport raw;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
  std::string params;
  std::string status = "ok";
};

struct Leaderboard {
  std::vector<LeaderboardRow> rows;
};

struct ExperimentResult {
  Leaderboard leaderboard;
  std::vector<std::pair<Family, GridResult>> searches;
  PreparedData data;
};

inline Dataset load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.csv_path) {
    // Without an explicit feature list, every column except the two pollutants is a feature.
    std::vector<std::string> features = cfg.csv_features;
    if (features.empty())
      for (const auto& h : read_csv_header(*cfg.csv_path))
        if (h != "co" && h != "nox") features.push_back(h);
    return load_csv(*cfg.csv_path, to_string(cfg.target), features);
  }
  SyntheticSpec spec = cfg.synthetic;
  spec.seed = cfg.seed;
  return generate_synthetic(spec, cfg.target);
}

}  // namespace pems::bench
