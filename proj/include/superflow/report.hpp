#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "superflow/config.hpp"
#include "superflow/train.hpp"

namespace superflow {

namespace csv {

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Header plus rows of raw cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw std::runtime_error("csv: missing column '" + name + "'");
  }
};

inline Table read(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": empty file");
  t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
    if (t.rows.back().size() != t.header.size()) {
      throw std::runtime_error(path.string() + ": row width does not match header");
    }
  }
  return t;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace csv

inline void write_pretrain_loss(const std::filesystem::path& path, const std::vector<double>& losses) {
  auto os = csv::open_out(path);
  os << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << csv::num(losses[i]) << '\n';
}

inline void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& log) {
  os << "iteration,variant,total_rollouts_cum,mean_reward,eval_reward,mean_abs_advantage,"
        "mean_kl_to_ref,entropy_proxy,wallclock_s\n";
  for (const auto& r : log) {
    os << r.iteration << ',' << to_string(r.variant) << ',' << r.total_rollouts_cum << ','
       << csv::num(r.mean_reward) << ',' << (r.eval_reward ? csv::num(*r.eval_reward) : "") << ','
       << csv::num(r.mean_abs_advantage) << ',' << csv::num(r.mean_kl_to_ref) << ','
       << csv::num(r.entropy_proxy) << ',' << csv::num(r.wallclock_s) << '\n';
  }
}

inline void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  auto os = csv::open_out(path);
  write_train_log(os, log);
}

inline std::vector<TrainLogRow> read_train_log(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto c_it = t.column("iteration"), c_var = t.column("variant"),
             c_roll = t.column("total_rollouts_cum"), c_mr = t.column("mean_reward"),
             c_eval = t.column("eval_reward"), c_adv = t.column("mean_abs_advantage"),
             c_kl = t.column("mean_kl_to_ref"), c_ent = t.column("entropy_proxy"),
             c_wall = t.column("wallclock_s");
  std::vector<TrainLogRow> out;
  for (const auto& r : t.rows) {
    TrainLogRow row;
    row.iteration = std::stoull(r[c_it]);
    row.variant = variant_from_string(r[c_var]);
    row.total_rollouts_cum = std::stoull(r[c_roll]);
    row.mean_reward = std::stod(r[c_mr]);
    if (!r[c_eval].empty()) row.eval_reward = std::stod(r[c_eval]);
    row.mean_abs_advantage = std::stod(r[c_adv]);
    row.mean_kl_to_ref = std::stod(r[c_kl]);
    row.entropy_proxy = std::stod(r[c_ent]);
    row.wallclock_s = std::stod(r[c_wall]);
    out.push_back(row);
  }
  return out;
}

inline void write_tracker_log(const std::filesystem::path& path, const std::vector<TrackerLogRow>& log) {
  auto os = csv::open_out(path);
  os << "iteration,prompt_id,v_hat,alpha,beta,w,bin,m\n";
  for (const auto& r : log) {
    os << r.iteration << ',' << r.prompt_id << ',' << csv::num(r.v_hat) << ',' << csv::num(r.alpha)
       << ',' << csv::num(r.beta) << ',' << csv::num(r.w) << ',' << r.bin << ',' << r.m << '\n';
  }
}

inline void write_trajectory_dump(const std::filesystem::path& path,
                                  const std::vector<TrajectoryDumpRow>& rows) {
  auto os = csv::open_out(path);
  os << "iteration,prompt_id,rollout_idx,t,std,logprob,reward\n";
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.prompt_id << ',' << r.rollout_idx << ',' << csv::num(r.t) << ','
       << csv::num(r.std) << ',' << csv::num(r.logprob) << ',' << csv::num(r.reward) << '\n';
  }
}

inline void write_summary(const std::filesystem::path& path, const RunSummary& s, double threshold) {
  auto os = csv::open_out(path);
  os << "key,value\n";
  os << "baseline_eval_reward," << csv::num(s.baseline_eval_reward) << '\n';
  os << "final_eval_reward," << csv::num(s.final_eval_reward) << '\n';
  os << "best_eval_reward," << csv::num(s.best_eval_reward) << '\n';
  os << "threshold," << csv::num(threshold) << '\n';
  os << "rollouts_to_threshold," << s.rollouts_to_threshold << '\n';
  os << "late_max_drawdown," << csv::num(s.late_max_drawdown) << '\n';
  os << "stable," << (s.stable ? 1 : 0) << '\n';
}

inline std::map<std::string, std::string> read_summary(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  std::map<std::string, std::string> out;
  for (const auto& r : t.rows) out[r[0]] = r[1];
  return out;
}

struct CompareRow {
  Variant variant = Variant::superflow;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  std::uint64_t total_rollouts_cum = 0;
  double eval_reward = 0.0;
};

inline void write_compare(const std::filesystem::path& path, const std::vector<CompareRow>& rows) {
  auto os = csv::open_out(path);
  os << "variant,seed,iteration,total_rollouts_cum,eval_reward\n";
  for (const auto& r : rows) {
    os << to_string(r.variant) << ',' << r.seed << ',' << r.iteration << ',' << r.total_rollouts_cum
       << ',' << csv::num(r.eval_reward) << '\n';
  }
}

inline std::vector<CompareRow> read_compare(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto cv = t.column("variant"), cs = t.column("seed"), ci = t.column("iteration"),
             cr = t.column("total_rollouts_cum"), ce = t.column("eval_reward");
  std::vector<CompareRow> out;
  for (const auto& r : t.rows) {
    out.push_back({variant_from_string(r[cv]), std::stoull(r[cs]), std::stoull(r[ci]),
                   std::stoull(r[cr]), std::stod(r[ce])});
  }
  return out;
}

/// Compare rows from one cell's log (evaluation iterations only).
inline std::vector<CompareRow> compare_rows(Variant v, std::uint64_t seed,
                                            const std::vector<TrainLogRow>& log) {
  std::vector<CompareRow> out;
  for (const auto& r : log) {
    if (r.eval_reward) out.push_back({v, seed, r.iteration, r.total_rollouts_cum, *r.eval_reward});
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Per-variant median eval reward across seeds at each evaluation iteration,
/// plotted against the median cumulative rollout count.
inline std::vector<Series> median_curves(const std::vector<CompareRow>& rows) {
  std::map<std::string, std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>>> acc;
  for (const auto& r : rows) {
    auto& cell = acc[to_string(r.variant)][r.iteration];
    cell.first.push_back(static_cast<double>(r.total_rollouts_cum));
    cell.second.push_back(r.eval_reward);
  }
  std::vector<Series> out;
  for (auto& [name, by_iter] : acc) {
    Series s{name, {}};
    for (auto& [it, cell] : by_iter) s.points.emplace_back(median(cell.first), median(cell.second));
    out.push_back(std::move(s));
  }
  return out;
}

/// Self-contained SVG line chart.
inline std::string svg_line_chart(const std::vector<Series>& series, const std::string& title,
                                  const std::string& x_label, const std::string& y_label) {
  const double width = 720, height = 440, left = 70, right = 160, top = 40, bottom = 60;
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!any) {
        x_lo = x_hi = x;
        y_lo = y_hi = y;
        any = true;
      }
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1;
  if (y_hi <= y_lo) y_hi = y_lo + 1;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto sy = [&](double y) { return top + ph - (y - y_lo) / (y_hi - y_lo) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream os;
  char buf[160];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
     << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#444\"/>\n",
                left, top, pw, ph);
  os << buf;
  for (int k = 0; k <= 4; ++k) {
    const double fx = x_lo + (x_hi - x_lo) * k / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.4g</text>\n",
                  sx(fx), top + ph + 18, fx);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3g</text>\n",
                  left - 6, sy(fy) + 4, fy);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", left,
                  sy(fy), left + pw, sy(fy));
    os << buf;
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 18 << "\" text-anchor=\"middle\">"
     << x_label << "</text>\n";
  os << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << y_label << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[i].points) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", sx(x), sy(y));
      os << buf;
    }
    os << "\"/>\n";
    const double ly = top + 16 + 18.0 * static_cast<double>(i);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"3\"/>\n",
                  left + pw + 12, ly, left + pw + 36, ly, color);
    os << buf;
    os << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << series[i].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = csv::open_out(path);
  os << text;
}

}  // namespace superflow
