// pems: command-line front end for the benchmark toolkit.
//
//   pems generate  [--rows N] [--seed N] [--target co|nox] [--out DIR]
//   pems benchmark [--config PATH] [--seed N] [--target co|nox] [--out DIR]
//   pems train     --family NAME [--config PATH] [--seed N] [--target co|nox] [--out DIR]
//   pems evaluate  --model PATH --data CSV [--out DIR]
//   pems report    --leaderboard CSV [--out DIR]

#include <pems/bench/run.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

using namespace pems;
namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string target;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (INI)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed (data generation, initialisation, shuffling)");
  cmd->add_option("--target", c.target, "emission target")->check(CLI::IsMember({"co", "nox"}));
  cmd->add_option("--out", c.out, "output directory");
}

bench::ExperimentConfig resolve(const CLI::App* cmd, const Common& c) {
  std::optional<Pollutant> target;
  if (!c.target.empty()) target = parse_pollutant(c.target);
  bench::ExperimentConfig cfg =
      c.config.empty() ? bench::default_config(target.value_or(Pollutant::nox)) : bench::load_config(c.config, target);
  if (cmd->count("--seed")) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

void print_leaderboard(const bench::Leaderboard& lb) {
  std::printf("%-8s %12s %12s %12s %12s  %s\n", "model", "mse", "rmse", "mae", "mape%", "status");
  for (const auto& r : lb.rows)
    std::printf("%-8s %12s %12s %12s %12s  %s\n", r.model.c_str(), format_sig(r.normalized.mse).c_str(),
                format_sig(r.normalized.rmse).c_str(), format_sig(r.normalized.mae).c_str(),
                format_sig(r.normalized.mape).c_str(), r.status.c_str());
}

bench::ExperimentHooks stderr_log() {
  bench::ExperimentHooks h;
  h.log = [](const std::string& m) { std::cerr << m << '\n'; };
  return h;
}

int run_generate(std::size_t rows, double noise, std::size_t regimes, const Common& c) {
  SyntheticSpec spec;
  spec.n_rows = rows;
  spec.seed = c.seed;
  spec.noise_std = noise;
  spec.regimes = regimes;
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  std::vector<Pollutant> targets = {Pollutant::co, Pollutant::nox};
  if (!c.target.empty()) targets = {parse_pollutant(c.target)};

  const Matrix x = synthetic::generate_features(spec);
  std::vector<Vector> ys;
  for (auto t : targets) ys.push_back(generate_synthetic(spec, t).target());
  const auto path = dir / ("synthetic_seed" + std::to_string(c.seed) + ".csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const auto& names = synthetic::feature_names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  for (auto t : targets) out << ',' << to_string(t);
  out << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_exact(x(i, j));
    for (const auto& y : ys) out << ',' << format_exact(y(i));
    out << '\n';
  }
  std::cout << "wrote " << path.string() << " (" << rows << " rows)\n";
  return 0;
}

int run_benchmark(const CLI::App* cmd, const Common& c, const std::string& only_family) {
  bench::ExperimentConfig cfg = resolve(cmd, c);
  if (!only_family.empty()) {
    const auto f = bench::parse_family(only_family);
    std::vector<bench::FamilyGrid> kept;
    for (auto& g : cfg.grids)
      if (g.family == f) kept.push_back(g);
    if (kept.empty()) kept.push_back({f, bench::default_grid(f, cfg.target)});
    cfg.grids = std::move(kept);
  }
  const auto res = bench::run_experiment(cfg, stderr_log());
  print_leaderboard(res.leaderboard);
  std::cout << "results in " << cfg.out_dir << '\n';
  for (const auto& r : res.leaderboard.rows)
    if (r.status != "ok") return 1;
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& data_path, const Common& c) {
  const auto art = bench::load_artifact(model_path);
  const Dataset ds = load_csv(data_path, art.target, art.feature_names);
  const auto [pred, actual] = bench::predict_dataset(art, ds);
  const auto raw = metrics::evaluate(pred, actual);
  const auto norm = metrics::evaluate_normalized(art.normalizer, pred, actual);
  const std::string name = bench::to_string(art.model.family());
  std::ostringstream csv;
  csv << "scale," << metrics::csv_header() << '\n'
      << "normalized," << metrics::to_csv_row(name, art.target, norm) << '\n'
      << "raw," << metrics::to_csv_row(name, art.target, raw) << '\n';
  std::cout << csv.str();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    std::ofstream out(fs::path(c.out) / "evaluation.csv", std::ios::binary);
    out << csv.str();
    std::ofstream p(fs::path(c.out) / "predictions.csv", std::ios::binary);
    p << "actual,predicted\n";
    for (Eigen::Index i = 0; i < pred.size(); ++i) p << format_exact(actual(i)) << ',' << format_exact(pred(i)) << '\n';
  }
  return 0;
}

int run_report(const std::string& leaderboard, const Common& c) {
  const auto lb = bench::read_leaderboard_csv(leaderboard);
  const fs::path dir = c.out.empty() ? fs::path(leaderboard).parent_path() : fs::path(c.out);
  if (!dir.empty()) fs::create_directories(dir);
  const auto path = (dir.empty() ? fs::path(".") : dir) / "leaderboard.svg";
  bench::write_svg(path.string(), lb);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PEMS emission-model benchmark"};
  app.require_subcommand(1);

  Common gen_c, bench_c, train_c, eval_c, report_c;
  std::size_t rows = 20000, regimes = 3;
  double noise = 0.25;
  auto* gen = app.add_subcommand("generate", "write a synthetic turbine dataset as CSV");
  add_common(gen, gen_c);
  gen->add_option("--rows", rows, "number of rows")->check(CLI::PositiveNumber);
  gen->add_option("--noise", noise, "target noise std (ppm)")->check(CLI::NonNegativeNumber);
  gen->add_option("--regimes", regimes, "number of operating regimes")->check(CLI::PositiveNumber);

  auto* benchmark = app.add_subcommand("benchmark", "grid-search, fit and evaluate every enabled family");
  add_common(benchmark, bench_c);

  std::string family;
  auto* train = app.add_subcommand("train", "grid-search and fit a single family");
  add_common(train, train_c);
  train->add_option("--family", family, "model family")->required();

  std::string model_path, data_path;
  auto* evaluate = app.add_subcommand("evaluate", "score a saved model on a CSV file");
  add_common(evaluate, eval_c);
  evaluate->add_option("--model", model_path, "model JSON written by benchmark/train")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data_path, "CSV with the model's feature columns and target")->required()->check(CLI::ExistingFile);

  std::string leaderboard;
  auto* report = app.add_subcommand("report", "render a leaderboard CSV as an SVG chart");
  add_common(report, report_c);
  report->add_option("--leaderboard", leaderboard, "leaderboard CSV")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return run_generate(rows, noise, regimes, gen_c);
    if (*benchmark) return run_benchmark(benchmark, bench_c, "");
    if (*train) return run_benchmark(train, train_c, family);
    if (*evaluate) return run_evaluate(model_path, data_path, eval_c);
    if (*report) return run_report(leaderboard, report_c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
