#pragma once

#include <algorithm>
#include <cstdlib>
#include <map>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "superflow/checkpoint.hpp"
#include "superflow/config.hpp"
#include "superflow/flow.hpp"
#include "superflow/report.hpp"
#include "superflow/train.hpp"

namespace superflow {

inline constexpr const char* kOutputRootEnv = "SUPERFLOW_OUTPUT_ROOT";

class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Relative paths go under $SUPERFLOW_OUTPUT_ROOT when it is set. Absolute
/// paths are re-rooted there as well so the override always wins.
inline std::filesystem::path under_output_root(const std::filesystem::path& p) {
  const char* root = std::getenv(kOutputRootEnv);
  if (root == nullptr || *root == '\0') return p;
  return std::filesystem::path(root) / p.relative_path();
}

inline std::filesystem::path output_dir(const RunConfig& cfg) { return under_output_root(cfg.output_dir); }

inline std::filesystem::path checkpoint_path(const RunConfig& cfg) {
  return under_output_root(cfg.checkpoint_path());
}

inline PolicyParams initial_policy(const RunConfig& cfg) {
  Rng rng = make_stream(cfg.seed, {tag(StreamTag::init)});
  return make_policy(cfg.policy_shape(), rng);
}

struct PretrainOutcome {
  PretrainResult result;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
};

inline PretrainOutcome run_pretrain(const RunConfig& cfg, std::ostream* progress = nullptr) {
  cfg.validate();
  const auto data = cfg.dataset.build();
  const auto settings = cfg.pretrain.settings();
  auto on_step = [&](std::size_t step, double loss) {
    if (progress && (step + 1) % 500 == 0) {
      *progress << "pretrain step " << step + 1 << "/" << settings.steps << " loss " << loss << "\n";
    }
  };
  PretrainOutcome out{pretrain(data, settings, initial_policy(cfg), cfg.seed, on_step), {}, {}};
  const auto dir = output_dir(cfg) / "pretrain";
  out.checkpoint = checkpoint_path(cfg);
  out.loss_csv = dir / "pretrain_loss.csv";
  save_checkpoint(out.checkpoint, out.result.params);
  write_pretrain_loss(out.loss_csv, out.result.losses);
  if (progress && !out.result.below_threshold) {
    *progress << "warning: smoothed pretraining loss " << out.result.final_smoothed_loss
              << " is above " << settings.loss_warn_threshold << "\n";
  }
  return out;
}

inline PolicyParams load_pretrained(const RunConfig& cfg) {
  const auto path = checkpoint_path(cfg);
  if (!std::filesystem::exists(path)) {
    throw MissingCheckpoint("no pretrained checkpoint at " + path.string() + " (run `pretrain` first)");
  }
  return load_checkpoint(path);
}

inline void write_run_outputs(const std::filesystem::path& dir, const RunConfig& cfg, Variant variant,
                              const RunArtifacts& art) {
  std::filesystem::create_directories(dir);
  write_train_log(dir / "train_log.csv", art.log);
  const auto tracker_csv = dir / "tracker_log.csv";
  if (uses_trackers(variant)) {
    write_tracker_log(tracker_csv, art.tracker_log);
  } else {
    std::filesystem::remove(tracker_csv);
  }
  if (cfg.rl.trajectory_dump) write_trajectory_dump(dir / "trajectory_dump.csv", art.trajectory_dump);
  write_summary(dir / "summary.csv", art.summary, cfg.rl.threshold);
  save_checkpoint(dir / "policy.ckpt", art.policy);
  write_text(dir / "config.ini", serialize_config(cfg));
}

inline std::filesystem::path train_dir(const RunConfig& cfg, Variant v) {
  return output_dir(cfg) / "train" / to_string(v);
}

inline RunArtifacts run_train(const RunConfig& cfg, Variant variant, std::ostream* progress = nullptr) {
  const PolicyParams pretrained = load_pretrained(cfg);
  TrainHooks hooks;
  if (progress) {
    hooks.on_log = [&](const TrainLogRow& r) {
      if (!r.eval_reward) return;
      *progress << to_string(r.variant) << " it " << r.iteration << " rollouts " << r.total_rollouts_cum
                << " eval " << *r.eval_reward << "\n";
    };
  }
  RunArtifacts art = train(cfg, variant, pretrained, hooks);
  write_run_outputs(train_dir(cfg, variant), cfg, variant, art);
  return art;
}

/// One SVG per variant plus an overlay of all variants.
inline void write_compare_plots(const std::filesystem::path& dir, const std::vector<CompareRow>& rows) {
  const auto curves = median_curves(rows);
  for (const auto& s : curves) {
    write_text(dir / ("median_curve_" + s.name + ".svg"),
               svg_line_chart({s}, s.name + ": median eval reward", "cumulative rollouts", "eval reward"));
  }
  if (!curves.empty()) {
    write_text(dir / "median_curves.svg",
               svg_line_chart(curves, "median eval reward", "cumulative rollouts", "eval reward"));
  }
}

struct CellFailure {
  Variant variant;
  std::uint64_t seed;
  std::string message;
};

struct CompareOutcome {
  std::vector<CompareRow> rows;
  std::vector<CellFailure> failures;
  std::filesystem::path dir;
};

/// Every (variant, seed) cell starts from the same pretrained checkpoint; the
/// checkpoint is produced first when absent. A failing cell is recorded and the
/// remaining cells still run.
inline CompareOutcome run_compare(const RunConfig& cfg, const std::vector<Variant>& variants,
                                  const std::vector<std::uint64_t>& seeds, std::ostream* progress = nullptr) {
  if (variants.empty()) throw ConfigError("compare: at least one variant is required");
  if (seeds.empty()) throw ConfigError("compare: at least one seed is required");
  cfg.validate();
  if (!std::filesystem::exists(checkpoint_path(cfg))) run_pretrain(cfg, progress);
  const PolicyParams pretrained = load_pretrained(cfg);

  CompareOutcome out;
  out.dir = output_dir(cfg) / "compare";
  for (Variant v : variants) {
    for (std::uint64_t seed : seeds) {
      RunConfig cell = cfg;
      cell.seed = seed;
      if (progress) *progress << "cell " << to_string(v) << " seed " << seed << "\n";
      try {
        RunArtifacts art = train(cell, v, pretrained);
        write_run_outputs(out.dir / (std::string(to_string(v)) + "_seed" + std::to_string(seed)), cell, v, art);
        auto rows = compare_rows(v, seed, art.log);
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());
      } catch (const std::exception& e) {
        out.failures.push_back({v, seed, e.what()});
        if (progress) *progress << "cell " << to_string(v) << " seed " << seed << " failed: " << e.what() << "\n";
      }
    }
  }
  write_compare(out.dir / "compare.csv", out.rows);
  {
    auto os = csv::open_out(out.dir / "failures.csv");
    os << "variant,seed,message\n";
    for (const auto& f : out.failures) {
      std::string msg = f.message;
      for (char& c : msg) {
        if (c == ',' || c == '\n') c = ' ';
      }
      os << to_string(f.variant) << ',' << f.seed << ',' << msg << '\n';
    }
  }
  write_compare_plots(out.dir, out.rows);
  return out;
}

/// Recomputes summaries from every train_log.csv under `dir`, checks them
/// against the stored summary.csv files, and regenerates comparison plots.
/// Returns the number of summaries that disagree with their logs.
inline std::size_t run_report(const std::filesystem::path& dir, std::ostream& os) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("report: not a directory: " + dir.string());
  std::vector<std::filesystem::path> logs;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "train_log.csv") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  std::size_t mismatches = 0;
  char buf[256];
  os << "run                                      final    best     rollouts_to_thr  drawdown  stable  check\n";
  for (const auto& path : logs) {
    const auto run_dir = path.parent_path();
    const auto log = read_train_log(path);
    double threshold = RlConfig{}.threshold;
    std::map<std::string, std::string> stored;
    const bool has_summary = std::filesystem::exists(run_dir / "summary.csv");
    if (has_summary) {
      stored = read_summary(run_dir / "summary.csv");
      threshold = std::stod(stored.at("threshold"));
    }
    const RunSummary s = summarize(log, threshold);
    std::string check = "n/a";
    if (has_summary) {
      const bool same = stored.at("final_eval_reward") == csv::num(s.final_eval_reward) &&
                        stored.at("best_eval_reward") == csv::num(s.best_eval_reward) &&
                        stored.at("baseline_eval_reward") == csv::num(s.baseline_eval_reward) &&
                        stored.at("rollouts_to_threshold") == std::to_string(s.rollouts_to_threshold) &&
                        stored.at("late_max_drawdown") == csv::num(s.late_max_drawdown) &&
                        stored.at("stable") == (s.stable ? "1" : "0");
      check = same ? "ok" : "MISMATCH";
      if (!same) ++mismatches;
    }
    std::snprintf(buf, sizeof buf, "%-40s %-8.4f %-8.4f %-16lld %-9.4f %-7s %s\n",
                  std::filesystem::relative(run_dir, dir).string().c_str(), s.final_eval_reward,
                  s.best_eval_reward, static_cast<long long>(s.rollouts_to_threshold), s.late_max_drawdown,
                  s.stable ? "yes" : "no", check.c_str());
    os << buf;
  }
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "compare.csv") {
      write_compare_plots(e.path().parent_path(), read_compare(e.path()));
      os << "plots regenerated in " << e.path().parent_path().string() << "\n";
    }
  }
  if (logs.empty()) os << "no train_log.csv found under " << dir.string() << "\n";
  return mismatches;
}

}  // namespace superflow
