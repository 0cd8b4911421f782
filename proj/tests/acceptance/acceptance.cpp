// Acceptance checks AC1-AC11: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "superflow/superflow.hpp"
#include "superflow/stats.hpp"

using namespace superflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* id, const char* what, double limit_s, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (limit_s > 0 && secs > limit_s) {
    o.pass = false;
    o.detail += " (over time limit " + std::to_string(limit_s) + " s)";
  }
  if (!o.pass) ++failures;
  std::printf("%s %s: %s [%s] %.2fs\n", o.pass ? "PASS" : "FAIL", id, what, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig default_config() {
  return load_config(fs::path(SUPERFLOW_SOURCE_DIR) / "configs" / "default.ini");
}

const PolicyParams& pretrained() {
  static const PolicyParams p = [] {
    const RunConfig cfg = default_config();
    Rng rng = make_stream(cfg.seed, {tag(StreamTag::init)});
    return pretrain(cfg.dataset.build(), cfg.pretrain.settings(), make_policy(cfg.policy_shape(), rng), cfg.seed)
        .params;
  }();
  return p;
}

// ---- AC1 --------------------------------------------------------------------------

Outcome gradient_checks() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> width(2, 24), depth(1, 3);
  std::normal_distribution<double> n01(0.0, 1.0);
  double worst = 0.0;
  int passed = 0;
  for (int check = 0; check < 100; ++check) {
    std::vector<std::size_t> sizes{width(rng)};
    const std::size_t hidden = depth(rng);
    for (std::size_t k = 0; k < hidden; ++k) sizes.push_back(width(rng));
    sizes.push_back(width(rng));
    Rng init(rng());
    MlpParams p = make_mlp(sizes, check % 4 == 3 ? Activation::relu : Activation::tanh, init);
    Vec x(sizes.front()), g(sizes.back());
    for (double& v : x) v = n01(rng);
    for (double& v : g) v = n01(rng);
    const auto analytic = mlp_backward(p, x, g);
    auto objective = [&] {
      const Vec y = mlp_forward(p, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
      return s;
    };
    const double h = 1e-5;
    double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
    auto blocks = parameter_blocks(p);
    const auto grads = parameter_blocks(analytic.param_grads);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (std::size_t i = 0; i < blocks[b].size(); ++i) {
        const double orig = blocks[b][i];
        blocks[b][i] = orig + h;
        const double up = objective();
        blocks[b][i] = orig - h;
        const double down = objective();
        blocks[b][i] = orig;
        const double fd = (up - down) / (2 * h);
        diff2 += (grads[b][i] - fd) * (grads[b][i] - fd);
        a2 += grads[b][i] * grads[b][i];
        f2 += fd * fd;
      }
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(f2), 1e-12});
    worst = std::max(worst, rel);
    if (rel < 1e-4) ++passed;
  }
  return {passed == 100, std::to_string(passed) + "/100 within 1e-4, worst relative error " + fmt("%.2e", worst)};
}

// ---- AC2 --------------------------------------------------------------------------

Outcome sde_degeneracy() {
  const PolicyParams& p = pretrained();
  const NoiseSchedule silent{0.0};
  int mismatched = 0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    Rng rng = make_stream(7, {k});
    const Vec x_init = standard_normal_vector(2, rng);
    const Trajectory sde = rollout_from(p, k % p.shape.prompts, 40, silent, x_init, rng);
    const auto ode = ode_path(p, k % p.shape.prompts, 40, x_init);
    for (std::size_t s = 0; s < sde.steps.size(); ++s) {
      if (sde.steps[s].x_next != ode[s + 1]) ++mismatched;
    }
  }
  return {mismatched == 0, "50 rollouts x 40 steps, " + std::to_string(mismatched) + " states differ bitwise"};
}

// ---- AC3 --------------------------------------------------------------------------

Outcome marginal_preservation() {
  const PolicyParams& p = pretrained();
  const RunConfig cfg = default_config();
  const std::size_t n = 5000;
  std::vector<Vec> ode(n), sde(n);
  const NoiseSchedule schedule{cfg.rl.noise_level};
  parallel_for(n, cfg.thread_count(), [&](std::size_t i) {
    Rng a = make_stream(31, {1, i});
    ode[i] = ode_sample(p, 0, 40, standard_normal_vector(2, a));
    Rng b = make_stream(31, {2, i});
    sde[i] = rollout(p, 0, 40, schedule, b).x_final;
  });
  const auto test = energy_permutation_test(ode, sde, 200, 31, cfg.thread_count());
  const double q99 = test.quantile(0.99);
  return {test.statistic < 1.5 * q99, "energy distance " + fmt("%.3e", test.statistic) + ", null q99 " +
                                          fmt("%.3e", q99) + ", ratio " + fmt("%.3f", test.statistic / q99) +
                                          ", p " + fmt("%.3f", test.p_value())};
}

// ---- AC4 --------------------------------------------------------------------------

Outcome tracker_convergence() {
  double mean_v = 0.0, mean_abs = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(5000 + seed);
    std::bernoulli_distribution coin(0.7);
    ValueTracker tr = tracker_init(std::vector<double>(8, 0.5), TrackerConfig{});
    for (int k = 0; k < 500; ++k) tracker_update(tr, coin(rng) ? 1.0 : 0.0, 0.9);
    mean_v += tr.v_hat / 20.0;
    mean_abs += std::abs(tr.v_hat - 0.7) / 20.0;
  }
  const double err = std::abs(mean_v - 0.7);
  return {err < 0.05, "|mean v_hat - 0.7| = " + fmt("%.4f", err) + "; per-seed mean |v_hat - 0.7| = " +
                          fmt("%.4f", mean_abs) + " (stationary sd at rho 0.9 is " +
                          fmt("%.3f", std::sqrt(0.21 * 0.1 / 1.9)) + ")"};
}

// ---- AC5 --------------------------------------------------------------------------

std::size_t brute_force_bin(double w, double lo, double hi, std::size_t K) {
  if (hi == lo) return 1;
  const double pos = (w - lo) / (hi - lo) * static_cast<double>(K);
  for (std::size_t k = 1; k <= K; ++k) {
    if (pos < static_cast<double>(k)) return k;
  }
  return K;
}

Outcome allocation_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> w(0.01, 0.51);
  std::uniform_int_distribution<int> len(1, 16);
  int mismatches = 0, out_of_range = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<std::size_t, double> weights;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) weights[i] = w(rng);
    if (trial % 10 == 0) weights[n] = weights[0];  // ties
    double lo = weights.begin()->second, hi = lo;
    for (const auto& [id, x] : weights) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    const auto a = allocate_rollouts(weights, 4, 24);
    for (const auto& [id, x] : weights) {
      const std::size_t b = brute_force_bin(x, lo, hi, 4);
      if (a.bin.at(id) != b || a.rollouts.at(id) != 24 - b + 1) ++mismatches;
      const auto m = a.rollouts.at(id);
      if (m < 21 || m > 24) ++out_of_range;
    }
  }
  return {mismatches == 0 && out_of_range == 0,
          std::to_string(mismatches) + " mismatches, " + std::to_string(out_of_range) + " m outside [21, 24]"};
}

// ---- AC6 --------------------------------------------------------------------------

Trajectory one_step(const PolicyParams& p, double ratio) {
  Rng rng(3);
  Trajectory tr;
  tr.prompt = 0;
  tr.steps.push_back(sde_step(p, Vec{0.4, -0.3}, 0.5, 0.1, 0, {0.7}, rng));
  tr.steps[0].logprob = step_logprob_under(p, tr.steps[0], 0) - std::log(ratio);
  tr.x_final = tr.steps[0].x_next;
  return tr;
}

Outcome clip_algebra() {
  const PolicyParams& p = pretrained();
  struct Case {
    double ratio, adv, want;
  };
  double worst = 0.0;
  for (const Case c : {Case{1.0, 0.37, 0.37}, Case{1.3, 1.0, 1.2}, Case{0.7, -1.0, -0.8}}) {
    const std::vector<Trajectory> trajs{one_step(p, c.ratio)};
    AdvantageSet adv;
    adv.trajectory = {c.adv};
    adv.per_step = {{c.adv}};
    const auto res = policy_objective(trajs, adv, p, p, {0.2, 0.0, 1});
    worst = std::max(worst, std::abs(res.objective - c.want));
  }
  return {worst <= 1e-10, "identity, 1.3 -> 1.2, 0.7 -> -0.8; max error " + fmt("%.2e", worst)};
}

// ---- AC7-AC9 ------------------------------------------------------------------------

struct Runs {
  std::vector<RunArtifacts> superflow, flow_grpo, flow_spo;
  double slowest_superflow_s = 0.0;
};

const Runs& end_to_end() {
  static const Runs runs = [] {
    Runs r;
    const RunConfig base = default_config();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      RunConfig cfg = base;
      cfg.seed = seed;
      const auto start = std::chrono::steady_clock::now();
      r.superflow.push_back(train(cfg, Variant::superflow, pretrained()));
      r.slowest_superflow_s = std::max(
          r.slowest_superflow_s, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      r.flow_grpo.push_back(train(cfg, Variant::flow_grpo, pretrained()));
      r.flow_spo.push_back(train(cfg, Variant::flow_spo, pretrained()));
      std::fprintf(stderr, "seed %llu done\n", static_cast<unsigned long long>(seed));
    }
    return r;
  }();
  return runs;
}

Outcome improvement() {
  const auto& runs = end_to_end();
  std::vector<double> gains;
  std::string per;
  for (const auto& a : runs.superflow) {
    const double g = a.summary.final_eval_reward / a.summary.baseline_eval_reward - 1.0;
    gains.push_back(g);
    per += fmt(" %.3f", g);
  }
  const double med = median(gains);
  return {med >= 0.5 && runs.slowest_superflow_s < 600,
          "slowest seed " + fmt("%.1f s", runs.slowest_superflow_s) + ", baseline " + fmt("%.4f", runs.superflow[0].summary.baseline_eval_reward) +
                          ", median relative gain " + fmt("%.3f", med) + ", per seed" + per};
}

Outcome efficiency() {
  const auto& runs = end_to_end();
  std::vector<double> sf, grpo;
  std::string per;
  for (std::size_t i = 0; i < runs.superflow.size(); ++i) {
    const double thr = 0.9 * runs.flow_grpo[i].summary.final_eval_reward;
    auto need = [&](const RunArtifacts& a) {
      const auto n = rollouts_to_threshold(a.log, thr);
      return n < 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(n);
    };
    sf.push_back(need(runs.superflow[i]));
    grpo.push_back(need(runs.flow_grpo[i]));
    per += fmt(" %.0f", sf.back()) + fmt("/%.0f", grpo.back());
  }
  const double a = median(sf), b = median(grpo);
  return {a <= b, "median rollouts superflow " + fmt("%.0f", a) + ", flow_grpo " + fmt("%.0f", b) + ", ratio " +
                      fmt("%.4f", a / b) + "; per seed (sf/grpo)" + per};
}

Outcome stability() {
  const auto& runs = end_to_end();
  double worst = 0.0;
  bool all = true;
  for (const auto& a : runs.superflow) {
    worst = std::max(worst, a.summary.late_max_drawdown);
    all = all && a.summary.late_max_drawdown <= kStableDrawdown;
  }
  double spo_worst = 0.0;
  std::vector<double> spo;
  for (const auto& a : runs.flow_spo) {
    spo.push_back(a.summary.late_max_drawdown);
    spo_worst = std::max(spo_worst, a.summary.late_max_drawdown);
  }
  return {all, "superflow worst late drawdown " + fmt("%.4f", worst) + "; flow_spo median " +
                   fmt("%.4f", median(spo)) + ", worst " + fmt("%.4f", spo_worst)};
}

// ---- AC10 ---------------------------------------------------------------------------

Outcome step_advantage_argmax() {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> pos(1e-3, 2.0);
  std::uniform_int_distribution<int> len(2, 32);
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(len(rng));
    for (double& v : a) v = n01(rng);
    const double sigma = pos(rng), eta = pos(rng);
    std::vector<double> s(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) s[i] = step_advantage(a[i], sigma, eta);
    if (std::max_element(a.begin(), a.end()) - a.begin() != std::max_element(s.begin(), s.end()) - s.begin()) ++bad;
  }
  return {bad == 0, std::to_string(bad) + "/1000 argmax disagreements"};
}

// ---- AC11 ---------------------------------------------------------------------------

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "superflow_acceptance";
  fs::remove_all(root);
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(kOutputRootEnv) + "='" + root.string() + "' '" + SUPERFLOW_CLI +
                            "' -q " + args + " > /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const std::string config = "'" + (fs::path(SUPERFLOW_SOURCE_DIR) / "configs" / "default.ini").string() + "'";
  if (run("pretrain " + config) != 0) return {false, "pretrain failed"};
  if (run("train " + config + " --variant superflow") != 0) return {false, "first train failed"};
  const fs::path log = root / fs::path(default_config().output_dir).relative_path() / "train" / "superflow" /
                       "train_log.csv";
  const std::string first = slurp(log);
  if (run("train " + config + " --variant superflow") != 0) return {false, "second train failed"};
  const std::string second = slurp(log);
  fs::remove_all(root);
  return {!first.empty() && first == second,
          std::to_string(first.size()) + " bytes, " + (first == second ? "identical" : "different")};
}

}  // namespace

int main() {
  std::fprintf(stderr, "pretraining the default model\n");
  pretrained();
  report("AC1", "gradient finite differences", 10, gradient_checks);
  report("AC2", "SDE with zero noise equals ODE", 1, sde_degeneracy);
  report("AC3", "SDE and ODE marginals agree", 120, marginal_preservation);
  report("AC4", "tracker convergence", 1, tracker_convergence);
  report("AC5", "allocation oracle", 1, allocation_oracle);
  report("AC6", "clip algebra", 1, clip_algebra);
  report("AC7", "end-to-end improvement", 0, improvement);
  report("AC8", "rollout efficiency vs flow_grpo", 0, efficiency);
  report("AC9", "late-stage stability", 0, stability);
  report("AC10", "step-advantage argmax invariance", 1, step_advantage_argmax);
  report("AC11", "byte-identical train logs", 0, cli_determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
