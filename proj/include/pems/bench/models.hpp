#pragma once

// Uniform fit/predict/serialize contract over the eight model families. Hyperparameters
// travel as ordered string key/value bundles so grids, reports and artifacts share one
// representation.

#include <pems/dataio.hpp>
#include <pems/linear_model.hpp>
#include <pems/neighbors.hpp>
#include <pems/neural/network.hpp>
#include <pems/svr.hpp>
#include <pems/synthetic.hpp>
#include <pems/trees.hpp>

#include <json.hpp>

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace pems::bench {

// Declaration order is the leaderboard row order.
enum class Family { linear, svr, cart, gbt, mlp, lstm, gru, knn };

inline constexpr std::array<Family, 8> all_families = {Family::linear, Family::svr, Family::cart, Family::gbt,
                                                       Family::mlp,    Family::lstm, Family::gru, Family::knn};

inline std::string to_string(Family f) {
  switch (f) {
    case Family::linear: return "linear";
    case Family::svr: return "svr";
    case Family::cart: return "cart";
    case Family::gbt: return "gbt";
    case Family::mlp: return "mlp";
    case Family::lstm: return "lstm";
    case Family::gru: return "gru";
    case Family::knn: return "knn";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  for (auto f : all_families)
    if (to_string(f) == s) return f;
  throw ConfigError("unknown model family '" + s + "' (expected linear, svr, cart, gbt, mlp, lstm, gru or knn)");
}

// What a family is trained on: raw sensor values, standardized rows, or standardized windows.
enum class InputKind { raw, standardized, windows };

inline InputKind input_kind(Family f) {
  switch (f) {
    case Family::cart:
    case Family::gbt: return InputKind::raw;
    case Family::lstm:
    case Family::gru: return InputKind::windows;
    default: return InputKind::standardized;
  }
}

inline std::string to_string(InputKind k) {
  return k == InputKind::raw ? "raw" : k == InputKind::standardized ? "standardized" : "windows";
}

inline InputKind parse_input_kind(const std::string& s) {
  if (s == "raw") return InputKind::raw;
  if (s == "standardized") return InputKind::standardized;
  if (s == "windows") return InputKind::windows;
  throw IoError("unknown input kind '" + s + "'");
}

using Bundle = std::vector<std::pair<std::string, std::string>>;

// "k=v;k=v" (no commas, so it fits in a CSV cell).
inline std::string format_bundle(const Bundle& b) {
  std::string out;
  for (const auto& [k, v] : b) {
    if (!out.empty()) out += ';';
    out += k + '=' + v;
  }
  return out;
}

inline Bundle parse_bundle(const std::string& s) {
  Bundle out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("bad parameter '" + item + "' (expected key=value)");
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return out;
}

inline std::optional<std::size_t> to_depth(const std::string& key, const std::string& v) {
  if (v == "none" || v == "None") return std::nullopt;
  return to_count(key, v);
}

// Applies each key through `set`, which returns false for keys it does not know.
template <class F>
void apply_bundle(Family f, const Bundle& b, F&& set) {
  for (const auto& [k, v] : b)
    if (!set(k, v)) throw ConfigError(to_string(f) + ": unknown hyperparameter '" + k + "'");
}

}  // namespace detail

inline linear::ElasticNetConfig linear_config(const Bundle& b) {
  linear::ElasticNetConfig c;
  detail::apply_bundle(Family::linear, b, [&](const std::string& k, const std::string& v) {
    if (k == "alpha") c.alpha = detail::to_double(k, v);
    else if (k == "l1_ratio") c.l1_ratio = detail::to_double(k, v);
    else if (k == "tol") c.tol = detail::to_double(k, v);
    else if (k == "max_iter") c.max_iter = detail::to_count(k, v);
    else return false;
    return true;
  });
  c.validate();
  return c;
}

inline svr::SvrConfig svr_config(const Bundle& b) {
  svr::SvrConfig c;
  detail::apply_bundle(Family::svr, b, [&](const std::string& k, const std::string& v) {
    if (k == "C") c.C = detail::to_double(k, v);
    else if (k == "kernel") c.kernel = svr::parse_kernel(v);
    else if (k == "gamma") c.gamma = v == "scale" ? std::nullopt : std::optional<double>(detail::to_double(k, v));
    else if (k == "epsilon") c.epsilon = detail::to_double(k, v);
    else if (k == "tol") c.tol = detail::to_double(k, v);
    else if (k == "max_passes") c.max_passes = detail::to_count(k, v);
    else return false;
    return true;
  });
  c.validate();
  return c;
}

inline trees::TreeConfig cart_config(const Bundle& b, std::uint64_t seed) {
  trees::TreeConfig c;
  c.seed = seed;
  detail::apply_bundle(Family::cart, b, [&](const std::string& k, const std::string& v) {
    if (k == "max_depth") c.max_depth = detail::to_depth(k, v);
    else if (k == "min_samples_leaf") c.min_samples_leaf = detail::to_count(k, v);
    else if (k == "min_samples_split") c.min_samples_split = detail::to_count(k, v);
    else if (k == "max_features") {
      if (v == "sqrt") c.max_features = trees::MaxFeatures::sqrt;
      else if (v == "all" || v == "none" || v == "None") c.max_features = trees::MaxFeatures::all;
      else throw ConfigError("cart: max_features must be sqrt or all");
    } else return false;
    return true;
  });
  c.validate();
  return c;
}

inline trees::GbtConfig gbt_config(const Bundle& b) {
  trees::GbtConfig c;
  detail::apply_bundle(Family::gbt, b, [&](const std::string& k, const std::string& v) {
    if (k == "n_estimators") c.n_estimators = detail::to_count(k, v);
    else if (k == "learning_rate") c.learning_rate = detail::to_double(k, v);
    else if (k == "max_depth") c.max_depth = detail::to_depth(k, v);
    else if (k == "lambda") c.lambda = detail::to_double(k, v);
    else if (k == "min_samples_leaf") c.min_samples_leaf = detail::to_count(k, v);
    else return false;
    return true;
  });
  c.validate();
  return c;
}

inline neighbors::KnnConfig knn_config(const Bundle& b) {
  neighbors::KnnConfig c;
  detail::apply_bundle(Family::knn, b, [&](const std::string& k, const std::string& v) {
    if (k == "n_neighbors") c.n_neighbors = detail::to_count(k, v);
    else if (k == "algorithm") c.algorithm = neighbors::parse_algorithm(v);
    else if (k == "leaf_size") c.leaf_size = detail::to_count(k, v);
    else if (k == "weights") {
      if (v != "distance") throw ConfigError("knn: only weights=distance is supported");
    } else return false;
    return true;
  });
  c.validate();
  return c;
}

inline nn::TrainConfig net_config(Family f, const Bundle& b, std::uint64_t seed) {
  nn::TrainConfig c;
  c.seed = seed;
  detail::apply_bundle(f, b, [&](const std::string& k, const std::string& v) {
    if (k == "num_epochs") c.num_epochs = detail::to_count(k, v);
    else if (k == "learning_rate") c.learning_rate = detail::to_double(k, v);
    else if (k == "batch_size") c.batch_size = detail::to_count(k, v);
    else if (k == "clip_norm") c.clip_norm = detail::to_double(k, v);
    else return false;
    return true;
  });
  c.validate();
  return c;
}

// Throws ConfigError if the bundle does not parse for the family.
inline void validate_bundle(Family f, const Bundle& b) {
  switch (f) {
    case Family::linear: (void)linear_config(b); break;
    case Family::svr: (void)svr_config(b); break;
    case Family::cart: (void)cart_config(b, 0); break;
    case Family::gbt: (void)gbt_config(b); break;
    case Family::knn: (void)knn_config(b); break;
    default: (void)net_config(f, b, 0); break;
  }
}

// The per-target hyperparameters reported for the original study.
inline Bundle reported_bundle(Family f, Pollutant target) {
  const bool nox = target == Pollutant::nox;
  switch (f) {
    case Family::linear: return {{"alpha", "0.1"}, {"l1_ratio", "0.1"}};
    case Family::svr: return {{"C", nox ? "10" : "100"}, {"gamma", "scale"}, {"kernel", "rbf"}};
    case Family::cart:
      if (nox) return {{"max_depth", "none"}, {"min_samples_leaf", "4"}, {"min_samples_split", "2"}, {"max_features", "sqrt"}};
      return {{"max_depth", "30"}, {"min_samples_leaf", "1"}, {"min_samples_split", "5"}, {"max_features", "sqrt"}};
    case Family::gbt: return {{"max_depth", "8"}, {"learning_rate", nox ? "0.1" : "0.01"}, {"n_estimators", "300"}};
    case Family::mlp: return {{"num_epochs", "100"}, {"learning_rate", "0.01"}, {"batch_size", "64"}};
    case Family::lstm:
    case Family::gru: return {{"num_epochs", "100"}, {"learning_rate", "0.001"}, {"batch_size", "64"}};
    case Family::knn:
      return {{"n_neighbors", "4"}, {"weights", "distance"}, {"algorithm", nox ? "brute" : "ball_tree"}};
  }
  return {};
}

// A model's input for one split. Exactly one pointer is set, matching input_kind.
struct ModelInput {
  const Matrix* rows = nullptr;
  const SequenceDataset* windows = nullptr;

  std::size_t size() const { return rows ? static_cast<std::size_t>(rows->rows()) : windows ? windows->size() : 0; }
};

// Nets and SVR learn a standardized target; predictions are mapped back with these.
struct TargetScaling {
  double mean = 0.0;
  double scale = 1.0;

  static TargetScaling fit(const Vector& y) {
    const double mu = y.mean();
    const double sd = std::sqrt((y.array() - mu).square().mean());
    return {mu, sd > 0.0 ? sd : 1.0};
  }
  Vector forward(const Vector& y) const { return ((y.array() - mean) / scale).matrix(); }
  Vector backward(const Vector& z) const { return (z.array() * scale + mean).matrix(); }
};

inline bool scales_target(Family f) { return f == Family::svr || f == Family::mlp || f == Family::lstm || f == Family::gru; }

class TrainedModel {
 public:
  using Payload = std::variant<linear::LinearModel, svr::SvrModel, trees::RegressionTree, trees::GbtModel,
                               neighbors::KnnModel, nn::TrainedNet>;

  TrainedModel(Family family, Bundle params, Payload model, TargetScaling ts = {})
      : family_(family), params_(std::move(params)), model_(std::move(model)), scaling_(ts) {}

  Family family() const { return family_; }
  const Bundle& params() const { return params_; }
  const Payload& payload() const { return model_; }
  const TargetScaling& target_scaling() const { return scaling_; }

  Vector predict(const ModelInput& in) const {
    const bool want_windows = input_kind(family_) == InputKind::windows;
    if (want_windows ? !in.windows : !in.rows)
      throw ShapeError(to_string(family_) + ": expected " + to_string(input_kind(family_)) + " input");
    Vector z = std::visit(
        [&](const auto& m) -> Vector {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, linear::LinearModel>) return linear::predict(m, *in.rows);
          else if constexpr (std::is_same_v<M, svr::SvrModel>) return svr::predict(m, *in.rows);
          else if constexpr (std::is_same_v<M, neighbors::KnnModel>) return m.predict(*in.rows);
          else if constexpr (std::is_same_v<M, nn::TrainedNet>)
            return want_windows ? nn::predict_net(m, *in.windows) : nn::predict_net(m, *in.rows);
          else return trees::predict(m, *in.rows);
        },
        model_);
    return scales_target(family_) ? scaling_.backward(z) : z;
  }

 private:
  Family family_;
  Bundle params_;
  Payload model_;
  TargetScaling scaling_;
};

// Fits one family on one bundle. `y` is aligned with the input samples.
inline TrainedModel fit_model(Family f, const Bundle& params, const ModelInput& in, const Vector& y,
                              std::uint64_t seed) {
  if (in.size() != static_cast<std::size_t>(y.size())) throw ShapeError("fit: input and target lengths differ");
  const bool want_windows = input_kind(f) == InputKind::windows;
  if (want_windows ? !in.windows : !in.rows)
    throw ShapeError(to_string(f) + ": expected " + to_string(input_kind(f)) + " input");
  const TargetScaling ts = scales_target(f) ? TargetScaling::fit(y) : TargetScaling{};
  switch (f) {
    case Family::linear: return {f, params, linear::fit_elastic_net(*in.rows, y, linear_config(params))};
    case Family::svr: return {f, params, svr::fit_svr(*in.rows, ts.forward(y), svr_config(params)), ts};
    case Family::cart: return {f, params, trees::fit_cart(*in.rows, y, cart_config(params, seed))};
    case Family::gbt: return {f, params, trees::fit_gbt(*in.rows, y, gbt_config(params))};
    case Family::knn: return {f, params, neighbors::KnnModel(*in.rows, y, knn_config(params))};
    case Family::mlp: {
      const auto cfg = net_config(f, params, seed);
      return {f, params, nn::train_net(nn::mlp_spec(static_cast<std::size_t>(in.rows->cols()), seed), *in.rows, ts.forward(y), cfg), ts};
    }
    case Family::lstm:
    case Family::gru: {
      const auto cfg = net_config(f, params, seed);
      SequenceDataset data = *in.windows;
      data.targets = ts.forward(y);
      const auto d = in.windows->n_features;
      auto spec = f == Family::lstm ? nn::lstm_spec(d, seed) : nn::gru_spec(d, seed);
      return {f, params, nn::train_net(spec, data, cfg), ts};
    }
  }
  throw ConfigError("unknown family");
}

// ---- artifact serialization -------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto row = j.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw IoError("model file: ragged matrix");
    m.row(i) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), cols);
  }
  return m;
}

inline nlohmann::json bundle_json(const Bundle& b) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [k, v] : b) j.push_back({k, v});
  return j;
}

inline Bundle bundle_from_json(const nlohmann::json& j) {
  Bundle b;
  for (const auto& kv : j) b.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
  return b;
}

}  // namespace detail

// Model payload as JSON. Network weights go to `weights_path` (binary) and the JSON
// records its file name.
inline nlohmann::json model_to_json(const TrainedModel& m, const std::filesystem::path& weights_path = {}) {
  nlohmann::json j;
  j["family"] = to_string(m.family());
  j["params"] = detail::bundle_json(m.params());
  j["target_scaling"] = {{"mean", m.target_scaling().mean}, {"scale", m.target_scaling().scale}};
  std::visit(
      [&](const auto& p) {
        using M = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<M, linear::LinearModel>) j["model"] = linear::to_json(p);
        else if constexpr (std::is_same_v<M, svr::SvrModel>) j["model"] = svr::to_json(p);
        else if constexpr (std::is_same_v<M, trees::RegressionTree>) {
          std::ostringstream os;
          trees::write_tree(os, p);
          j["model"] = os.str();
        } else if constexpr (std::is_same_v<M, trees::GbtModel>) {
          std::ostringstream os;
          trees::write_gbt(os, p);
          j["model"] = os.str();
        } else if constexpr (std::is_same_v<M, neighbors::KnnModel>) {
          const auto& c = p.config();
          j["model"] = {{"n_neighbors", c.n_neighbors},
                        {"algorithm", neighbors::to_string(c.algorithm)},
                        {"leaf_size", c.leaf_size},
                        {"n_features", p.points().cols()},
                        {"points", detail::matrix_json(p.points())},
                        {"targets", std::vector<double>(p.targets().begin(), p.targets().end())}};
        } else {
          if (weights_path.empty()) throw IoError("network models need a weights file path");
          nn::save_weights(weights_path.string(), p);
          j["model"] = {{"weights_file", weights_path.filename().string()}};
        }
      },
      m.payload());
  return j;
}

// `dir` resolves a network's relative weights file.
inline TrainedModel model_from_json(const nlohmann::json& j, const std::filesystem::path& dir = {}) {
  const Family f = parse_family(j.at("family").get<std::string>());
  const Bundle params = detail::bundle_from_json(j.at("params"));
  const TargetScaling ts{j.at("target_scaling").at("mean").get<double>(), j.at("target_scaling").at("scale").get<double>()};
  const auto& mj = j.at("model");
  switch (f) {
    case Family::linear: return {f, params, linear::linear_from_json(mj), ts};
    case Family::svr: return {f, params, svr::svr_from_json(mj), ts};
    case Family::cart: {
      std::istringstream is(mj.get<std::string>());
      return {f, params, trees::read_tree(is), ts};
    }
    case Family::gbt: {
      std::istringstream is(mj.get<std::string>());
      return {f, params, trees::read_gbt(is), ts};
    }
    case Family::knn: {
      neighbors::KnnConfig c;
      c.n_neighbors = mj.at("n_neighbors").get<std::size_t>();
      c.algorithm = neighbors::parse_algorithm(mj.at("algorithm").get<std::string>());
      c.leaf_size = mj.at("leaf_size").get<std::size_t>();
      const auto targets = mj.at("targets").get<std::vector<double>>();
      Matrix pts = detail::matrix_from_json(mj.at("points"), mj.at("n_features").get<Eigen::Index>());
      Vector y = Eigen::Map<const Vector>(targets.data(), static_cast<Eigen::Index>(targets.size()));
      return {f, params, neighbors::KnnModel(pts, y, c), ts};
    }
    default: return {f, params, nn::load_weights((dir / mj.at("weights_file").get<std::string>()).string()), ts};
  }
}

}  // namespace pems::bench
