#pragma once

// Synthetic gas-turbine operating data. The generator and ground-truth emission
// functions are documented in docs/synthetic.md; keep the two in sync.

#include <pems/core.hpp>
#include <pems/dataio.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace pems {

enum class Pollutant { co, nox };

inline std::string to_string(Pollutant p) { return p == Pollutant::co ? "co" : "nox"; }

inline Pollutant parse_pollutant(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "co") return Pollutant::co;
  if (s == "nox") return Pollutant::nox;
  throw ConfigError("unknown target '" + s + "' (expected co or nox)");
}

struct SyntheticSpec {
  std::size_t n_rows = 20000;
  std::uint64_t seed = 1;
  double noise_std = 0.25;  // target units (ppm)
  std::size_t regimes = 3;

  void validate() const {
    if (n_rows < 1) throw ConfigError("synthetic: n_rows must be >= 1");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("synthetic: noise_std must be >= 0");
    if (regimes < 1) throw ConfigError("synthetic: regimes must be >= 1");
  }
};

namespace synthetic {

inline constexpr std::size_t n_features = 13;

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "ambient_temp",     "ambient_pressure", "ambient_humidity", "air_filter_dp", "compressor_discharge_pressure",
      "compressor_discharge_temp", "fuel_flow", "turbine_inlet_temp", "exhaust_temp", "power_output",
      "shaft_speed",      "igv_angle",        "fuel_gas_temp"};
  return names;
}

// Column indices used by the ground-truth functions.
enum Feature : Eigen::Index {
  ambient_temp = 0,
  ambient_pressure = 1,
  ambient_humidity = 2,
  compressor_discharge_pressure = 4,
  turbine_inlet_temp = 7,
  power_output = 9,
};

// Noise-free emission level for row t of a feature matrix. Row t-1 enters through the
// load-ramp term (the first row uses itself as its predecessor).
inline double ground_truth(Pollutant target, const Matrix& x, Eigen::Index t) {
  const Eigen::Index prev = t > 0 ? t - 1 : t;
  const double tit = x(t, turbine_inlet_temp);
  const double hum = x(t, ambient_humidity);
  const double cdp = x(t, compressor_discharge_pressure);
  const double tamb = x(t, ambient_temp);
  const double ramp = x(t, power_output) - x(prev, power_output);
  const double ramp_term = ramp * ramp / (1.0 + ramp * ramp);
  if (target == Pollutant::nox) {
    return 8.0 + 30.0 * std::exp((tit - 1250.0) / 90.0) * (1.0 - 0.45 * (hum - 0.6)) * std::sqrt(cdp / 15.0) +
           6.0 * ramp_term;
  }
  return 3.0 + 40.0 * std::exp(-(tit - 1180.0) / 45.0) + 0.05 * std::max(0.0, 5.0 - tamb) + 8.0 * ramp_term;
}

inline Vector ground_truth(Pollutant target, const Matrix& x) {
  Vector y(x.rows());
  for (Eigen::Index t = 0; t < x.rows(); ++t) y(t) = ground_truth(target, x, t);
  return y;
}

// Sensor readings only (no target); deterministic in (spec, seed).
inline Matrix generate_features(const SyntheticSpec& spec) {
  spec.validate();
  std::seed_seq latent_seq{spec.seed, std::uint64_t{0x6c6174656e74}};
  std::seed_seq sensor_seq{spec.seed, std::uint64_t{0x73656e736f72}};
  std::mt19937_64 latent_rng(latent_seq);
  std::mt19937_64 sensor_rng(sensor_seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const std::size_t R = spec.regimes;
  auto setpoint = [&](std::size_t k) { return R == 1 ? 0.8 : 0.6 + 0.35 * double(k) / double(R - 1); };
  auto fuel_quality = [](std::size_t k) { return 1.0 + 0.08 * (double(k % 3) - 1.0); };
  constexpr double switch_prob = 1.0 / 400.0;
  constexpr double day = 1440.0;

  const auto n = static_cast<Eigen::Index>(spec.n_rows);
  Matrix x(n, static_cast<Eigen::Index>(n_features));

  std::size_t regime = static_cast<std::size_t>(unif(latent_rng) * double(R)) % R;
  double load = setpoint(regime);
  double temp_anomaly = 0.0;
  double humidity_anomaly = 0.0;
  double pressure = 1.013;
  const double phase = 2.0 * std::numbers::pi * unif(latent_rng);

  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) {
      if (R > 1 && unif(latent_rng) < switch_prob) {
        const auto step = 1 + static_cast<std::size_t>(unif(latent_rng) * double(R - 1)) % (R - 1);
        regime = (regime + step) % R;
      }
      load += 0.04 * (setpoint(regime) - load) + 0.012 * normal(latent_rng);
      load = std::clamp(load, 0.3, 1.05);
      temp_anomaly = 0.995 * temp_anomaly + 0.1 * normal(latent_rng);
      humidity_anomaly = 0.99 * humidity_anomaly + 0.003 * normal(latent_rng);
      pressure = 1.013 + 0.99 * (pressure - 1.013) + 0.0003 * normal(latent_rng);
    }
    const double q = fuel_quality(regime);
    const double tamb = 15.0 + 8.0 * std::sin(2.0 * std::numbers::pi * double(t) / day + phase) + temp_anomaly;
    const double dt = tamb - 15.0;
    const double humidity = std::clamp(0.6 - 0.015 * dt + humidity_anomaly, 0.1, 1.0);
    const double cdp = pressure * (4.0 + 12.0 * load) * (1.0 - 0.003 * dt);

    auto sensor = [&](double v, double sd) { return v + sd * normal(sensor_rng); };
    x(t, 0) = sensor(tamb, 0.02);
    x(t, 1) = sensor(pressure, 0.00005);
    x(t, 2) = sensor(humidity, 0.001);
    x(t, 3) = sensor(0.02 + 0.08 * load * load, 0.0002);
    x(t, 4) = sensor(cdp, 0.01);
    x(t, 5) = sensor((tamb + 273.15) * std::pow(cdp / pressure, 0.286) - 273.15, 0.1);
    x(t, 6) = sensor((0.4 + 2.2 * load) / q * (1.0 + 0.002 * dt), 0.002);
    x(t, 7) = sensor(1000.0 + 330.0 * load * std::sqrt(q) - 1.5 * dt, 0.2);
    x(t, 8) = sensor(430.0 + 120.0 * load - 0.6 * dt, 0.1);
    x(t, 9) = sensor(32.0 * load * (1.0 - 0.007 * dt), 0.02);
    x(t, 10) = sensor(0.95 + 0.05 * load, 0.0002);
    x(t, 11) = sensor(45.0 + 40.0 * std::min(load / 0.85, 1.0), 0.05);
    x(t, 12) = sensor(25.0 + 10.0 * q, 0.02);
  }
  return x;
}

}  // namespace synthetic

// Synthetic turbine dataset: 13 sensor columns plus the chosen emission target,
// target = ground truth + N(0, noise_std^2) drawn from an independent stream.
inline Dataset generate_synthetic(const SyntheticSpec& spec, Pollutant target) {
  Matrix x = synthetic::generate_features(spec);
  Vector y = synthetic::ground_truth(target, x);
  if (spec.noise_std > 0.0) {
    std::seed_seq noise_seq{spec.seed, std::uint64_t{0x6e6f697365}};
    std::mt19937_64 noise_rng(noise_seq);
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (Eigen::Index t = 0; t < y.size(); ++t) y(t) += noise(noise_rng);
  }
  return Dataset(synthetic::feature_names(), std::move(x), to_string(target), std::move(y), true, 0);
}

}  // namespace pems
