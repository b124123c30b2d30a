#pragma once

// Leaderboard CSV (write and parse back) and the grouped-bar SVG chart.

#include <pems/bench/experiment.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace pems::bench {

inline std::string leaderboard_header() {
  return "model,target,mse,rmse,mae,mape,raw_mse,raw_rmse,raw_mae,raw_mape,n,n_excluded,val_mse,params,status";
}

namespace detail {

inline std::string csv_safe(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ' ');
  return s;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_metric(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return to_double("leaderboard", s);
}

}  // namespace detail

// Normalized metrics first (the headline numbers), then raw-unit metrics, 5 significant digits.
inline std::string to_csv_row(const LeaderboardRow& r) {
  const auto& n = r.normalized;
  const auto& w = r.raw;
  return detail::csv_safe(r.model) + ',' + detail::csv_safe(r.target) + ',' + format_sig(n.mse) + ',' +
         format_sig(n.rmse) + ',' + format_sig(n.mae) + ',' + format_sig(n.mape) + ',' + format_sig(w.mse) + ',' +
         format_sig(w.rmse) + ',' + format_sig(w.mae) + ',' + format_sig(w.mape) + ',' + std::to_string(n.n_evaluated) +
         ',' + std::to_string(n.n_excluded_mape) + ',' + format_sig(r.val_mse) + ',' + detail::csv_safe(r.params) + ',' +
         detail::csv_safe(r.status);
}

inline void write_leaderboard_csv(std::ostream& out, const Leaderboard& lb) {
  out << leaderboard_header() << '\n';
  for (const auto& r : lb.rows) out << to_csv_row(r) << '\n';
}

inline void write_leaderboard_csv(const std::string& path, const Leaderboard& lb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_leaderboard_csv(out, lb);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Leaderboard read_leaderboard_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("leaderboard: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != leaderboard_header()) throw IoError("leaderboard: unexpected header");
  Leaderboard lb;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 15) throw IoError("leaderboard: expected 15 fields, got " + std::to_string(f.size()));
    LeaderboardRow r;
    r.model = f[0];
    r.target = f[1];
    auto& n = r.normalized;
    auto& w = r.raw;
    n.mse = detail::parse_metric(f[2]);
    n.rmse = detail::parse_metric(f[3]);
    n.mae = detail::parse_metric(f[4]);
    n.mape = detail::parse_metric(f[5]);
    w.mse = detail::parse_metric(f[6]);
    w.rmse = detail::parse_metric(f[7]);
    w.mae = detail::parse_metric(f[8]);
    w.mape = detail::parse_metric(f[9]);
    n.n_evaluated = w.n_evaluated = detail::to_count("n", f[10]);
    n.n_excluded_mape = w.n_excluded_mape = detail::to_count("n_excluded", f[11]);
    r.val_mse = detail::parse_metric(f[12]);
    r.params = f[13];
    r.status = f[14];
    lb.rows.push_back(std::move(r));
  }
  return lb;
}

inline Leaderboard read_leaderboard_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_leaderboard_csv(in);
}

// Grouped bars: one group per model, one bar per normalized metric, log10 value axis.
// Non-positive or missing values are drawn as zero-height bars so the count stays fixed.
inline std::string leaderboard_svg(const Leaderboard& lb, const std::string& title = "Normalized test metrics") {
  constexpr double bar_w = 14, group_gap = 22, left = 70, right = 150, top = 40, plot_h = 300, bottom = 70;
  const std::array<std::string, 4> names = {"MSE", "RMSE", "MAE", "MAPE (%)"};
  const std::array<std::string, 4> colors = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759"};
  auto metric = [](const LeaderboardRow& r, std::size_t k) {
    const auto& n = r.normalized;
    return k == 0 ? n.mse : k == 1 ? n.rmse : k == 2 ? n.mae : n.mape;
  };

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : lb.rows)
    for (std::size_t k = 0; k < 4; ++k) {
      const double v = metric(r, k);
      if (v > 0 && std::isfinite(v)) {
        lo = std::min(lo, std::floor(std::log10(v)));
        hi = std::max(hi, std::ceil(std::log10(v)));
      }
    }
  if (!std::isfinite(lo)) {
    lo = -4;
    hi = 2;
  }
  if (hi <= lo) hi = lo + 1;

  const double group_w = 4 * bar_w + group_gap;
  const double plot_w = std::max(300.0, group_w * static_cast<double>(lb.rows.size()) + group_gap);
  const double width = left + plot_w + right, height = top + plot_h + bottom;
  const double base = top + plot_h;
  auto y_of = [&](double v) { return top + plot_h * (hi - std::log10(v)) / (hi - lo); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  s << "<line class=\"axis\" x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << base
    << "\" stroke=\"black\"/>\n";
  s << "<line class=\"axis\" x1=\"" << left << "\" y1=\"" << base << "\" x2=\"" << left + plot_w << "\" y2=\"" << base
    << "\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); ++e) {
    const double y = y_of(std::pow(10.0, e));
    s << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  for (std::size_t g = 0; g < lb.rows.size(); ++g) {
    const double x0 = left + group_gap + group_w * static_cast<double>(g);
    for (std::size_t k = 0; k < 4; ++k) {
      const double v = metric(lb.rows[g], k);
      const double y = v > 0 && std::isfinite(v) ? std::clamp(y_of(v), top, base) : base;
      s << "<rect class=\"bar\" x=\"" << x0 + bar_w * static_cast<double>(k) << "\" y=\"" << y << "\" width=\"" << bar_w
        << "\" height=\"" << base - y << "\" fill=\"" << colors[k] << "\"><title>" << lb.rows[g].model << ' '
        << names[k] << " = " << format_sig(v) << "</title></rect>\n";
    }
    s << "<text x=\"" << x0 + 2 * bar_w << "\" y=\"" << base + 16 << "\" text-anchor=\"middle\">" << lb.rows[g].model
      << "</text>\n";
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double y = top + 18.0 * static_cast<double>(k);
    s << "<rect class=\"legend\" x=\"" << left + plot_w + 20 << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\""
      << colors[k] << "\"/>\n";
    s << "<text x=\"" << left + plot_w + 38 << "\" y=\"" << y + 10 << "\">" << names[k] << "</text>\n";
  }
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">model (log10 value axis)</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline void write_svg(const std::string& path, const Leaderboard& lb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << leaderboard_svg(lb);
}

// Leaderboard CSV and chart into out_dir (created if needed).
inline void emit_report(const Leaderboard& lb, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  write_leaderboard_csv((out_dir / "leaderboard.csv").string(), lb);
  write_svg((out_dir / "leaderboard.svg").string(), lb);
}

}  // namespace pems::bench
