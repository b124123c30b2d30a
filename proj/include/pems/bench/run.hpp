#pragma once

// End-to-end experiment runner and saved-model artifacts.

#include <pems/bench/report.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace pems::bench {

// A trained model together with the preprocessing it expects.
struct Artifact {
  TrainedModel model;
  std::string target;
  std::vector<std::string> feature_names;
  Scaler scaler;
  metrics::TargetNormalizer normalizer{0.0, 1.0};
  std::size_t window_len = 1;
};

// Writes <dir>/<family>.json (plus <family>.weights for networks).
inline std::filesystem::path save_artifact(const std::filesystem::path& dir, const Artifact& a) {
  const std::string name = to_string(a.model.family());
  nlohmann::json j = model_to_json(a.model, dir / (name + ".weights"));
  j["format"] = "pems-model-1";
  j["target"] = a.target;
  j["input"] = to_string(input_kind(a.model.family()));
  j["window_len"] = a.window_len;
  j["feature_names"] = a.feature_names;
  j["scaler"] = {{"means", std::vector<double>(a.scaler.means().begin(), a.scaler.means().end())},
                 {"stds", std::vector<double>(a.scaler.stds().begin(), a.scaler.stds().end())},
                 {"fitted_on", a.scaler.fitted_on()}};
  j["normalizer"] = {{"y_min", a.normalizer.y_min()}, {"y_max", a.normalizer.y_max()}};
  const auto path = dir / (name + ".json");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
  return path;
}

inline Artifact load_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format") != "pems-model-1") throw IoError("unsupported model format");
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    auto means = j.at("scaler").at("means").get<std::vector<double>>();
    auto stds = j.at("scaler").at("stds").get<std::vector<double>>();
    auto vec = [](const std::vector<double>& v) { return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()))); };
    Scaler sc(names, vec(means), vec(stds), j.at("scaler").at("fitted_on").get<std::size_t>());
    return Artifact{model_from_json(j, path.parent_path()),
                    j.at("target").get<std::string>(),
                    names,
                    std::move(sc),
                    metrics::TargetNormalizer(j.at("normalizer").at("y_min").get<double>(), j.at("normalizer").at("y_max").get<double>()),
                    j.at("window_len").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw IoError("model file '" + path.string() + "': " + e.what());
  }
}

// Predictions for a dataset plus the matching actual targets. Window models have no
// prediction for the first w-1 rows, so those rows are dropped from both vectors.
inline std::pair<Vector, Vector> predict_dataset(const Artifact& a, const Dataset& ds) {
  const InputKind kind = input_kind(a.model.family());
  if (kind == InputKind::raw) return {a.model.predict({&ds.features(), nullptr}), ds.target()};
  const Matrix z = a.scaler.apply(ds).features();
  if (kind == InputKind::standardized) return {a.model.predict({&z, nullptr}), ds.target()};
  const SequenceDataset w = make_windows(z, ds.target(), a.window_len);
  return {a.model.predict({nullptr, &w}), w.targets};
}

struct RunOptions {
  bool write_artifacts = true;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentHooks& hooks = {},
                                       const RunOptions& opt = {}) {
  cfg.validate();
  const Dataset ds = load_experiment_data(cfg);
  if (hooks.log && ds.dropped_rows() > 0) hooks.log("dropped " + std::to_string(ds.dropped_rows()) + " non-finite rows");

  ExperimentResult res;
  res.data = prepare(ds, cfg.split, cfg.window_len, hooks);
  const auto& data = res.data;
  const std::string target = to_string(cfg.target);
  const std::filesystem::path out_dir(cfg.out_dir);
  if (opt.write_artifacts) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "models", ec);
    if (ec) throw IoError("cannot create '" + (out_dir / "models").string() + "': " + ec.message());
  }

  for (const auto& [family, bundles] : cfg.grids) {
    LeaderboardRow row;
    row.model = to_string(family);
    row.target = target;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.normalized = row.raw = {nan, nan, nan, nan, 0, 0};
    try {
      GridResult g = grid_search(family, bundles, data.train, data.val, cfg.seed, hooks);
      const InputKind kind = input_kind(family);
      const Vector pred = g.model->predict(data.test.input(kind));
      row.raw = metrics::evaluate(pred, data.test.target);
      row.normalized = metrics::evaluate_normalized(data.normalizer, pred, data.test.target);
      row.val_mse = g.val_mse;
      row.params = format_bundle(g.best_params);
      if (opt.write_artifacts) {
        save_artifact(out_dir / "models",
                      Artifact{*g.model, target, ds.feature_names(), data.scaler, data.normalizer, data.window_len});
        if (const auto* net = std::get_if<nn::TrainedNet>(&g.model->payload()))
          nn::write_loss_history((out_dir / "models" / (row.model + "_loss.csv")).string(), *net);
      }
      res.searches.emplace_back(family, std::move(g));
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      if (hooks.log) hooks.log(row.model + " " + row.status);
    }
    res.leaderboard.rows.push_back(std::move(row));
  }

  if (opt.write_artifacts) {
    emit_report(res.leaderboard, out_dir);
    std::ofstream grid(out_dir / "grid_search.csv", std::ios::binary);
    grid << "model,bundle,params,val_mse,error\n";
    for (const auto& [family, g] : res.searches)
      for (std::size_t i = 0; i < g.outcomes.size(); ++i)
        grid << to_string(family) << ',' << i << ',' << detail::csv_safe(format_bundle(g.outcomes[i].params)) << ','
             << format_sig(g.outcomes[i].val_mse) << ',' << detail::csv_safe(g.outcomes[i].error) << '\n';
  }
  return res;
}

}  // namespace pems::bench
