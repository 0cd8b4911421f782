#pragma once

// Run configuration: a flat, sectioned key = value text file.
//
//   # comment
//   [run]
//   seed = 1
//   [prompt.0]
//   kind = mode_target
//   target = 2, 0
//
// Sections: run, dataset (required), model, pretrain, rl, tracker and one
// prompt.<id> section per prompt (ids contiguous from 0). Unknown sections or
// keys are errors. Lists are comma separated.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "superflow/error.hpp"
#include "superflow/flow.hpp"
#include "superflow/mlp.hpp"
#include "superflow/policy.hpp"
#include "superflow/rewards.hpp"
#include "superflow/tracker.hpp"

namespace superflow {

enum class Variant { flow_grpo, flow_spo, spo_fr, superflow };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::flow_grpo: return "flow_grpo";
    case Variant::flow_spo: return "flow_spo";
    case Variant::spo_fr: return "spo_fr";
    case Variant::superflow: return "superflow";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "flow_grpo") return Variant::flow_grpo;
  if (s == "flow_spo") return Variant::flow_spo;
  if (s == "spo_fr") return Variant::spo_fr;
  if (s == "superflow") return Variant::superflow;
  throw ConfigError("unknown variant '" + s + "' (expected flow_grpo, flow_spo, spo_fr, superflow)");
}

struct DatasetConfig {
  std::string kind = "ring";  // ring | normal
  std::size_t dim = 2;
  std::size_t modes = 8;
  double radius = 2.0;
  double std = 0.1;

  SyntheticDataset build() const {
    if (kind == "ring") {
      if (dim != 2) throw ConfigError("dataset: ring requires dim = 2");
      return SyntheticDataset::ring(modes, radius, std);
    }
    if (kind == "normal") return SyntheticDataset::standard_normal(dim);
    throw ConfigError("dataset: unknown kind '" + kind + "'");
  }

  bool operator==(const DatasetConfig&) const = default;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{32, 32};
  Activation activation = Activation::tanh;
  std::size_t time_freqs = 3;
  std::size_t embed_dim = 4;

  bool operator==(const ModelConfig&) const = default;
};

struct PretrainConfig {
  std::size_t steps = 4000;
  std::size_t batch = 128;
  double lr = 2e-3;
  double loss_warn_threshold = 4.0;  // ring data: irreducible loss is about 3.6
  std::string checkpoint;  // empty: <output_dir>/pretrain/policy.ckpt

  PretrainSettings settings() const { return {steps, batch, lr, loss_warn_threshold, 100}; }

  bool operator==(const PretrainConfig&) const = default;
};

struct RlConfig {
  Variant variant = Variant::superflow;
  std::size_t iterations = 300;
  std::size_t batch_prompts = 8;  // B
  std::size_t group_size = 24;    // G for flow_grpo
  std::size_t m_max = 24;
  std::size_t bins = 4;  // K
  std::size_t t_train = 10;
  std::size_t t_eval = 40;
  double noise_level = 0.7;  // a in sigma_t = a sqrt(t / (1 - t))
  double eta = 1.0;
  double gamma = 1.0;
  double eps_clip = 0.2;
  double beta_kl = 0.04;
  double lr = 3e-3;
  std::size_t updates_per_iter = 2;
  std::size_t update_interval = 1;  // optimizer steps between data-collection snapshot refreshes
  bool invert_allocation = false;
  bool per_group_centering = false;
  std::size_t eval_interval = 5;
  std::size_t eval_samples = 32;
  double threshold = 0.5;  // eval reward used for the rollouts-to-threshold summary
  bool log_wallclock = false;
  bool trajectory_dump = false;

  bool operator==(const RlConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  std::size_t threads = 0;  // 0: hardware concurrency
  DatasetConfig dataset;
  ModelConfig model;
  PretrainConfig pretrain;
  RlConfig rl;
  TrackerConfig tracker;
  std::vector<PromptSpec> prompts;

  std::size_t dim() const { return dataset.dim; }

  PolicyShape policy_shape() const {
    PolicyShape s;
    s.dim = dataset.dim;
    s.time_freqs = model.time_freqs;
    s.embed_dim = model.embed_dim;
    s.prompts = prompts.size();
    s.hidden = model.hidden;
    s.activation = model.activation;
    return s;
  }

  std::filesystem::path checkpoint_path() const {
    if (!pretrain.checkpoint.empty()) return pretrain.checkpoint;
    return std::filesystem::path(output_dir) / "pretrain" / "policy.ckpt";
  }

  std::size_t thread_count() const { return threads == 0 ? default_thread_count() : threads; }

  void validate() const {
    if (prompts.empty()) throw ConfigError("config: at least one [prompt.N] section is required");
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (prompts[i].id != i) throw ConfigError("config: prompt ids must be contiguous from 0");
      try {
        prompts[i].task.validate(dataset.dim);
      } catch (const std::exception& e) {
        throw ConfigError("config: [prompt." + std::to_string(i) + "]: " + e.what());
      }
    }
    if (model.hidden.empty()) throw ConfigError("config: model.hidden needs at least one layer");
    if (rl.m_max < rl.bins) throw ConfigError("config: rl.m_max must be >= rl.bins");
    if (rl.bins < 1) throw ConfigError("config: rl.bins must be >= 1");
    if (rl.t_train < 1 || rl.t_eval < 1) throw ConfigError("config: rl.t_train and rl.t_eval must be >= 1");
    if (rl.batch_prompts < 1 || rl.batch_prompts > prompts.size()) {
      throw ConfigError("config: rl.batch_prompts must lie in [1, number of prompts]");
    }
    if (rl.group_size < 2) throw ConfigError("config: rl.group_size must be >= 2 for group advantages");
    if (!(rl.noise_level > 0.0)) throw ConfigError("config: rl.noise_level must be positive for RL");
    if (!(rl.eta > 0.0)) throw ConfigError("config: rl.eta must be positive");
    if (!(rl.gamma >= 0.0 && rl.gamma <= 1.0)) throw ConfigError("config: rl.gamma must lie in [0,1]");
    if (!(rl.eps_clip > 0.0 && rl.eps_clip < 1.0)) throw ConfigError("config: rl.eps_clip must lie in (0,1)");
    if (!(rl.beta_kl >= 0.0)) throw ConfigError("config: rl.beta_kl must be >= 0");
    if (rl.updates_per_iter < 1) throw ConfigError("config: rl.updates_per_iter must be >= 1");
    if (rl.update_interval < 1) throw ConfigError("config: rl.update_interval must be >= 1");
    if (rl.eval_interval < 1 || rl.eval_samples < 1) throw ConfigError("config: eval settings must be >= 1");
    if (pretrain.batch < 1) throw ConfigError("config: pretrain.batch must be >= 1");
    tracker.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_vec(const Vec& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

class IniDocument {
 public:
  std::map<std::string, std::map<std::string, Entry>> sections;
  std::map<std::string, int> section_lines;

  static IniDocument parse(std::istream& is, const std::string& source) {
    IniDocument doc;
    std::string raw;
    std::string current;
    int line_no = 0;
    while (std::getline(is, raw)) {
      ++line_no;
      auto hash = raw.find('#');
      std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (line.empty()) continue;
      auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where() + "unterminated section header '" + line + "'");
        current = trim(line.substr(1, line.size() - 2));
        if (current.empty()) throw ConfigError(where() + "empty section name");
        if (doc.sections.count(current)) throw ConfigError(where() + "duplicate section [" + current + "]");
        doc.sections[current];
        doc.section_lines[current] = line_no;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value', got '" + line + "'");
      if (current.empty()) throw ConfigError(where() + "key outside of any [section]");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(where() + "empty key");
      auto& sec = doc.sections[current];
      if (sec.count(key)) throw ConfigError(where() + "duplicate key '" + current + "." + key + "'");
      sec[key] = Entry{value, line_no, false};
    }
    return doc;
  }
};

class Reader {
 public:
  Reader(IniDocument& doc, std::string source) : doc_(doc), source_(std::move(source)) {}

  bool has_section(const std::string& s) const { return doc_.sections.count(s) > 0; }

  void require_section(const std::string& s) const {
    if (!has_section(s)) {
      throw ConfigError(source_ + ": missing required section [" + s + "] (field '" + s + "')");
    }
  }

  template <class T, class Parse>
  void get(const std::string& section, const std::string& key, T& out, Parse parse) {
    auto sit = doc_.sections.find(section);
    if (sit == doc_.sections.end()) return;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return;
    kit->second.used = true;
    try {
      out = parse(kit->second.value);
    } catch (const ConfigError& e) {
      throw ConfigError(context(kit->second) + section + "." + key + ": " + e.what());
    } catch (const std::exception&) {
      throw ConfigError(context(kit->second) + "invalid value '" + kit->second.value + "' for " +
                        section + "." + key);
    }
  }

  template <class T>
  void required(const std::string& section, const std::string& key, T& out,
                T (*parse)(const std::string&)) {
    auto sit = doc_.sections.find(section);
    if (sit == doc_.sections.end() || !sit->second.count(key)) {
      throw ConfigError(source_ + ": missing required field '" + section + "." + key + "'");
    }
    get(section, key, out, parse);
  }

  void check_unused() const {
    for (const auto& [name, sec] : doc_.sections) {
      for (const auto& [key, entry] : sec) {
        if (!entry.used) throw ConfigError(context(entry) + "unknown key '" + name + "." + key + "'");
      }
    }
  }

  std::string context(const Entry& e) const { return source_ + ":" + std::to_string(e.line) + ": "; }

  IniDocument& doc() { return doc_; }
  const std::string& source() const { return source_; }

 private:
  IniDocument& doc_;
  std::string source_;
};

inline std::size_t parse_size(const std::string& s) {
  std::size_t pos = 0;
  if (!s.empty() && s[0] == '-') throw ConfigError("expected a non-negative integer, got '" + s + "'");
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline std::uint64_t parse_u64(const std::string& s) { return parse_size(s); }

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

inline std::string parse_string(const std::string& s) { return s; }

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline Vec parse_vec(const std::string& s) {
  Vec out;
  for (const auto& item : split_list(s)) out.push_back(parse_double(item));
  return out;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) out.push_back(parse_size(item));
  return out;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is, const std::string& source = "<config>") {
  using namespace detail;
  IniDocument doc = IniDocument::parse(is, source);
  Reader rd(doc, source);
  RunConfig c;

  for (const auto& [name, line] : doc.section_lines) {
    static const std::set<std::string> known{"run", "dataset", "model", "pretrain", "rl", "tracker"};
    if (known.count(name) || name.rfind("prompt.", 0) == 0) continue;
    throw ConfigError(source + ":" + std::to_string(line) + ": unknown section [" + name + "]");
  }

  rd.get("run", "seed", c.seed, parse_u64);
  rd.get("run", "output_dir", c.output_dir, parse_string);
  rd.get("run", "threads", c.threads, parse_size);

  rd.require_section("dataset");
  rd.required("dataset", "kind", c.dataset.kind, parse_string);
  rd.get("dataset", "dim", c.dataset.dim, parse_size);
  rd.get("dataset", "modes", c.dataset.modes, parse_size);
  rd.get("dataset", "radius", c.dataset.radius, parse_double);
  rd.get("dataset", "std", c.dataset.std, parse_double);
  if (c.dataset.kind != "ring" && c.dataset.kind != "normal") {
    throw ConfigError(source + ": dataset.kind must be ring or normal, got '" + c.dataset.kind + "'");
  }

  rd.get("model", "hidden", c.model.hidden, parse_sizes);
  rd.get("model", "activation", c.model.activation, activation_from_string);
  rd.get("model", "time_freqs", c.model.time_freqs, parse_size);
  rd.get("model", "embed_dim", c.model.embed_dim, parse_size);

  rd.get("pretrain", "steps", c.pretrain.steps, parse_size);
  rd.get("pretrain", "batch", c.pretrain.batch, parse_size);
  rd.get("pretrain", "lr", c.pretrain.lr, parse_double);
  rd.get("pretrain", "loss_warn_threshold", c.pretrain.loss_warn_threshold, parse_double);
  rd.get("pretrain", "checkpoint", c.pretrain.checkpoint, parse_string);

  auto& r = c.rl;
  rd.get("rl", "variant", r.variant, variant_from_string);
  rd.get("rl", "iterations", r.iterations, parse_size);
  rd.get("rl", "batch_prompts", r.batch_prompts, parse_size);
  rd.get("rl", "group_size", r.group_size, parse_size);
  rd.get("rl", "m_max", r.m_max, parse_size);
  rd.get("rl", "bins", r.bins, parse_size);
  rd.get("rl", "t_train", r.t_train, parse_size);
  rd.get("rl", "t_eval", r.t_eval, parse_size);
  rd.get("rl", "noise_level", r.noise_level, parse_double);
  rd.get("rl", "eta", r.eta, parse_double);
  rd.get("rl", "gamma", r.gamma, parse_double);
  rd.get("rl", "eps_clip", r.eps_clip, parse_double);
  rd.get("rl", "beta_kl", r.beta_kl, parse_double);
  rd.get("rl", "lr", r.lr, parse_double);
  rd.get("rl", "updates_per_iter", r.updates_per_iter, parse_size);
  rd.get("rl", "update_interval", r.update_interval, parse_size);
  rd.get("rl", "invert_allocation", r.invert_allocation, parse_bool);
  rd.get("rl", "per_group_centering", r.per_group_centering, parse_bool);
  rd.get("rl", "eval_interval", r.eval_interval, parse_size);
  rd.get("rl", "eval_samples", r.eval_samples, parse_size);
  rd.get("rl", "threshold", r.threshold, parse_double);
  rd.get("rl", "log_wallclock", r.log_wallclock, parse_bool);
  rd.get("rl", "trajectory_dump", r.trajectory_dump, parse_bool);

  auto& t = c.tracker;
  rd.get("tracker", "rho_min", t.rho_min, parse_double);
  rd.get("tracker", "rho_max", t.rho_max, parse_double);
  rd.get("tracker", "d_half", t.d_half, parse_double);
  rd.get("tracker", "n0", t.n0, parse_size);
  rd.get("tracker", "epsilon_w", t.epsilon_w, parse_double);
  rd.get("tracker", "probe_cap", t.probe_cap, parse_size);

  std::map<std::size_t, std::string> prompt_sections;
  for (const auto& [name, line] : doc.section_lines) {
    if (name.rfind("prompt.", 0) != 0) continue;
    std::size_t id = 0;
    try {
      id = parse_size(name.substr(7));
    } catch (const std::exception&) {
      throw ConfigError(source + ":" + std::to_string(line) + ": prompt section needs a numeric id: [" +
                        name + "]");
    }
    prompt_sections[id] = name;
  }
  for (const auto& [id, name] : prompt_sections) {
    PromptSpec p;
    p.id = id;
    p.label = "prompt" + std::to_string(id);
    rd.get(name, "label", p.label, parse_string);
    rd.required(name, "kind", p.task.kind, reward_kind_from_string);
    rd.get(name, "target", p.task.target, parse_vec);
    rd.get(name, "bandwidth", p.task.bandwidth, parse_double);
    rd.get(name, "center", p.task.center, parse_vec);
    rd.get(name, "radius", p.task.radius, parse_double);
    rd.get(name, "normal", p.task.normal, parse_vec);
    rd.get(name, "offset", p.task.offset, parse_double);
    rd.get(name, "partial_credit", p.task.partial_credit, parse_double);
    c.prompts.push_back(std::move(p));
  }

  rd.check_unused();
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return parse_config(is, path.string());
}

/// Canonical text form; parse_config(serialize_config(c)) reproduces c.
inline std::string serialize_config(const RunConfig& c) {
  using detail::format_double;
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << "\n"; };
  auto num = [](auto v) { return std::to_string(v); };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };

  os << "[run]\n";
  kv("seed", num(c.seed));
  kv("output_dir", c.output_dir);
  kv("threads", num(c.threads));

  os << "\n[dataset]\n";
  kv("kind", c.dataset.kind);
  kv("dim", num(c.dataset.dim));
  kv("modes", num(c.dataset.modes));
  kv("radius", format_double(c.dataset.radius));
  kv("std", format_double(c.dataset.std));

  os << "\n[model]\n";
  std::string hidden;
  for (std::size_t i = 0; i < c.model.hidden.size(); ++i) {
    hidden += (i ? ", " : "") + num(c.model.hidden[i]);
  }
  kv("hidden", hidden);
  kv("activation", to_string(c.model.activation));
  kv("time_freqs", num(c.model.time_freqs));
  kv("embed_dim", num(c.model.embed_dim));

  os << "\n[pretrain]\n";
  kv("steps", num(c.pretrain.steps));
  kv("batch", num(c.pretrain.batch));
  kv("lr", format_double(c.pretrain.lr));
  kv("loss_warn_threshold", format_double(c.pretrain.loss_warn_threshold));
  if (!c.pretrain.checkpoint.empty()) kv("checkpoint", c.pretrain.checkpoint);

  const auto& r = c.rl;
  os << "\n[rl]\n";
  kv("variant", to_string(r.variant));
  kv("iterations", num(r.iterations));
  kv("batch_prompts", num(r.batch_prompts));
  kv("group_size", num(r.group_size));
  kv("m_max", num(r.m_max));
  kv("bins", num(r.bins));
  kv("t_train", num(r.t_train));
  kv("t_eval", num(r.t_eval));
  kv("noise_level", format_double(r.noise_level));
  kv("eta", format_double(r.eta));
  kv("gamma", format_double(r.gamma));
  kv("eps_clip", format_double(r.eps_clip));
  kv("beta_kl", format_double(r.beta_kl));
  kv("lr", format_double(r.lr));
  kv("updates_per_iter", num(r.updates_per_iter));
  kv("update_interval", num(r.update_interval));
  kv("invert_allocation", flag(r.invert_allocation));
  kv("per_group_centering", flag(r.per_group_centering));
  kv("eval_interval", num(r.eval_interval));
  kv("eval_samples", num(r.eval_samples));
  kv("threshold", format_double(r.threshold));
  kv("log_wallclock", flag(r.log_wallclock));
  kv("trajectory_dump", flag(r.trajectory_dump));

  const auto& t = c.tracker;
  os << "\n[tracker]\n";
  kv("rho_min", format_double(t.rho_min));
  kv("rho_max", format_double(t.rho_max));
  kv("d_half", format_double(t.d_half));
  kv("n0", num(t.n0));
  kv("epsilon_w", format_double(t.epsilon_w));
  kv("probe_cap", num(t.probe_cap));

  for (const auto& p : c.prompts) {
    os << "\n[prompt." << p.id << "]\n";
    kv("label", p.label);
    kv("kind", to_string(p.task.kind));
    switch (p.task.kind) {
      case RewardKind::mode_target:
        kv("target", detail::format_vec(p.task.target));
        kv("bandwidth", format_double(p.task.bandwidth));
        break;
      case RewardKind::hierarchical:
        kv("center", detail::format_vec(p.task.center));
        kv("radius", format_double(p.task.radius));
        kv("normal", detail::format_vec(p.task.normal));
        kv("offset", format_double(p.task.offset));
        kv("partial_credit", format_double(p.task.partial_credit));
        break;
      case RewardKind::region:
        kv("center", detail::format_vec(p.task.center));
        kv("radius", format_double(p.task.radius));
        break;
    }
  }
  return os.str();
}

/// The 16-prompt toy pool over the 8-mode ring (radius 2): six single-mode
/// targets (hard), two two-mode regions, two half-ring regions, two
/// whole-support regions (easy, near-zero variance) and four hierarchical
/// half-ring tasks with a half-plane secondary criterion.
inline std::vector<PromptSpec> default_prompt_pool() {
  const double ring = 2.0;
  auto dir = [](double deg) {
    const double a = deg * std::numbers::pi / 180.0;
    return Vec{std::cos(a), std::sin(a)};
  };
  auto scaled = [](Vec v, double s) {
    for (auto& x : v) x *= s;
    return v;
  };
  auto round6 = [](Vec v) {
    for (auto& x : v) x = std::round(x * 1e6) / 1e6;
    return v;
  };
  std::vector<PromptSpec> pool;
  auto add = [&](std::string label, RewardTask task) {
    pool.push_back(PromptSpec{pool.size(), std::move(label), std::move(task)});
  };
  for (int k = 0; k < 6; ++k) {
    add("mode" + std::to_string(k), RewardTask::mode(round6(scaled(dir(45.0 * k), ring)), 0.5));
  }
  // Two adjacent modes: ball centred between them.
  for (int k : {2, 6}) {
    add("pair" + std::to_string(k) + std::to_string(k + 1),
        RewardTask::ball(round6(scaled(dir(45.0 * k + 22.5), 1.85)), 1.0));
  }
  // Four consecutive modes starting at k.
  for (int k : {1, 5}) {
    add("half" + std::to_string(k), RewardTask::ball(round6(scaled(dir(45.0 * k + 67.5), 1.5)), 2.45));
  }
  add("anywhere", RewardTask::ball({0.0, 0.0}, 3.0));
  add("anywhere_tight", RewardTask::ball({0.0, 0.0}, 2.6));
  // Primary: four modes k..k+3; secondary: the first two of them.
  for (int k : {0, 2, 4, 6}) {
    add("tiered" + std::to_string(k),
        RewardTask::tiered(round6(scaled(dir(45.0 * k + 67.5), 1.5)), 2.45,
                           round6(dir(45.0 * k - 22.5)), 0.0, 0.5));
  }
  return pool;
}

inline RunConfig default_run_config() {
  RunConfig c;
  c.prompts = default_prompt_pool();
  return c;
}

}  // namespace superflow
