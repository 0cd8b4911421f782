#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "superflow/superflow.hpp"

using namespace superflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  RunConfig cfg = default_run_config();
  cfg.output_dir = "small";
  cfg.threads = 1;
  cfg.pretrain.steps = 300;
  cfg.pretrain.batch = 64;
  cfg.rl.iterations = 6;
  cfg.rl.eval_interval = 3;
  cfg.rl.eval_samples = 4;
  cfg.rl.batch_prompts = 3;
  cfg.rl.group_size = 4;
  cfg.rl.m_max = 4;
  cfg.rl.bins = 2;
  return cfg;
}

// Each test gets its own output root so runs never see each other's files.
class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("superflow_cli_" + std::string(info->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = root_ / "small.ini";
    write_text(config_, serialize_config(small_config()));
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(kOutputRootEnv) + "='" + (root_ / "out").string() + "' '" +
                            SUPERFLOW_CLI + "' -q " + args + " >'" + (root_ / "stdout.txt").string() + "' 2>'" +
                            (root_ / "stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string cfg_arg() const { return "'" + config_.string() + "'"; }
  fs::path out() const { return root_ / "out" / "small"; }
  std::string err() const { return slurp(root_ / "stderr.txt"); }

  fs::path root_, config_;
};

}  // namespace

// ---- config -------------------------------------------------------------------

TEST(Config, SerializeParseRoundTripIsIdempotent) {
  const std::string once = serialize_config(default_run_config());
  std::istringstream is(once);
  const RunConfig back = parse_config(is);
  EXPECT_EQ(serialize_config(back), once);
  EXPECT_EQ(back.prompts.size(), 16u);
}

TEST(Config, ShippedDefaultMatchesBuiltIn) {
  const RunConfig c = load_config(fs::path(SUPERFLOW_SOURCE_DIR) / "configs" / "default.ini");
  EXPECT_EQ(serialize_config(c), serialize_config(default_run_config()));
}

TEST(Config, ErrorsCarryLineContext) {
  std::istringstream is("[dataset]\nkind = ring\nmodes = eight\n");
  try {
    parse_config(is, "bad.ini");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("bad.ini:3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("modes"), std::string::npos) << msg;
  }
}

TEST(Config, MissingRequiredFieldIsNamed) {
  std::istringstream is("[run]\nseed = 3\n");
  try {
    parse_config(is, "x.ini");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  std::istringstream key("[dataset]\nkind = ring\nradious = 2\n");
  EXPECT_THROW(parse_config(key), ConfigError);
  std::istringstream section("[dataset]\nkind = ring\n[optimizer]\nlr = 1\n");
  EXPECT_THROW(parse_config(section), ConfigError);
}

TEST(Config, ValidationRejectsInconsistentValues) {
  RunConfig c = default_run_config();
  c.rl.bins = c.rl.m_max + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_run_config();
  c.rl.batch_prompts = c.prompts.size() + 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, DefaultPoolIsHeterogeneous) {
  const auto pool = default_prompt_pool();
  ASSERT_EQ(pool.size(), 16u);
  std::set<RewardKind> kinds;
  std::set<std::size_t> ids;
  for (const auto& p : pool) {
    kinds.insert(p.task.kind);
    ids.insert(p.id);
    EXPECT_NO_THROW(p.task.validate(2));
  }
  EXPECT_EQ(kinds.size(), 3u);
  EXPECT_EQ(ids.size(), 16u);
}

TEST(Config, VariantNamesRoundTrip) {
  for (Variant v : {Variant::flow_grpo, Variant::flow_spo, Variant::spo_fr, Variant::superflow}) {
    EXPECT_EQ(variant_from_string(to_string(v)), v);
  }
  EXPECT_THROW(variant_from_string("ppo"), ConfigError);
}

// ---- summaries recomputed from CSV ---------------------------------------------

TEST(Report, RolloutsToThresholdFromCsv) {
  const fs::path dir = fs::temp_directory_path() / "superflow_report_csv";
  fs::remove_all(dir);
  std::vector<TrainLogRow> log;
  const double evals[] = {0.1, 0.3, 0.55, 0.4, 0.7};
  for (std::size_t i = 0; i < 5; ++i) {
    TrainLogRow r;
    r.iteration = i;
    r.total_rollouts_cum = 37 * i + 5;
    r.eval_reward = evals[i];
    log.push_back(r);
  }
  write_train_log(dir / "train_log.csv", log);
  // Plain text scan of the file, independent of the CSV reader.
  std::ifstream is(dir / "train_log.csv");
  std::string line;
  std::getline(is, line);
  long long first = -1;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() > 4 && !f[4].empty() && std::stod(f[4]) >= 0.5) {
      first = std::stoll(f[2]);
      break;
    }
  }
  EXPECT_EQ(first, 79);
  EXPECT_EQ(rollouts_to_threshold(read_train_log(dir / "train_log.csv"), 0.5), first);
  fs::remove_all(dir);
}

// ---- CLI --------------------------------------------------------------------------

TEST_F(Cli, PretrainWritesCheckpointAndIsReproducible) {
  ASSERT_EQ(run("pretrain " + cfg_arg()), 0) << err();
  const fs::path ckpt = root_ / "out" / fs::path(small_config().checkpoint_path()).relative_path();
  EXPECT_TRUE(fs::exists(ckpt));
  const auto loss = out() / "pretrain" / "pretrain_loss.csv";
  ASSERT_TRUE(fs::exists(loss));
  const std::string first = slurp(loss);
  EXPECT_EQ(csv::read(loss).rows.size(), 300u);
  ASSERT_EQ(run("pretrain " + cfg_arg()), 0) << err();
  EXPECT_EQ(slurp(loss), first);
  EXPECT_NO_THROW(load_checkpoint(ckpt));
}

TEST_F(Cli, TrainWithoutCheckpointFails) {
  EXPECT_EQ(run("train " + cfg_arg() + " --variant superflow"), 1);
  EXPECT_NE(err().find("pretrain"), std::string::npos) << err();
}

TEST_F(Cli, BadInputsExitWithConfigError) {
  EXPECT_EQ(run("train '" + (root_ / "missing.ini").string() + "' --variant superflow"), 1);
  EXPECT_EQ(run("train " + cfg_arg() + " --variant ppo"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  write_text(root_ / "broken.ini", "[dataset]\nkind = spiral\n");
  EXPECT_EQ(run("config '" + (root_ / "broken.ini").string() + "'"), 1);
}

TEST_F(Cli, TrainWritesVariantOutputs) {
  ASSERT_EQ(run("pretrain " + cfg_arg()), 0) << err();
  ASSERT_EQ(run("train " + cfg_arg() + " --variant superflow"), 0) << err();
  ASSERT_EQ(run("train " + cfg_arg() + " --variant flow_grpo"), 0) << err();
  const auto sf_dir = out() / "train" / "superflow";
  const auto grpo_dir = out() / "train" / "flow_grpo";
  for (const auto& d : {sf_dir, grpo_dir}) {
    EXPECT_TRUE(fs::exists(d / "train_log.csv"));
    EXPECT_TRUE(fs::exists(d / "summary.csv"));
    EXPECT_TRUE(fs::exists(d / "policy.ckpt"));
    EXPECT_TRUE(fs::exists(d / "config.ini"));
    EXPECT_FALSE(fs::exists(d / "trajectory_dump.csv"));
  }
  EXPECT_TRUE(fs::exists(sf_dir / "tracker_log.csv"));
  EXPECT_FALSE(fs::exists(grpo_dir / "tracker_log.csv"));

  const auto log = read_train_log(sf_dir / "train_log.csv");
  ASSERT_EQ(log.size(), 7u);
  for (const auto& r : log) EXPECT_EQ(r.variant, Variant::superflow);
  const auto tracker = csv::read(sf_dir / "tracker_log.csv");
  EXPECT_EQ(tracker.rows.size(), 7u * 16u);

  // The stored config reproduces the run's settings.
  EXPECT_EQ(serialize_config(load_config(sf_dir / "config.ini")), serialize_config(load_config(config_)));

  ASSERT_EQ(run("report '" + (root_ / "out").string() + "'"), 0) << err();
  const std::string table = slurp(root_ / "stdout.txt");
  EXPECT_NE(table.find("train/superflow"), std::string::npos) << table;
  EXPECT_EQ(table.find("MISMATCH"), std::string::npos) << table;
}

TEST_F(Cli, ReportFlagsTamperedSummary) {
  ASSERT_EQ(run("pretrain " + cfg_arg()), 0) << err();
  ASSERT_EQ(run("train " + cfg_arg() + " --variant flow_spo"), 0) << err();
  const auto summary = out() / "train" / "flow_spo" / "summary.csv";
  std::string text = slurp(summary);
  const auto pos = text.find("final_eval_reward,");
  ASSERT_NE(pos, std::string::npos);
  text.insert(pos + std::string("final_eval_reward,").size(), "9");
  write_text(summary, text);
  EXPECT_EQ(run("report '" + out().string() + "'"), 1);
  EXPECT_NE(slurp(root_ / "stdout.txt").find("MISMATCH"), std::string::npos);
}

TEST_F(Cli, TrainLogIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(run("pretrain " + cfg_arg()), 0) << err();
  ASSERT_EQ(run("train " + cfg_arg() + " --variant spo_fr"), 0) << err();
  const std::string first = slurp(out() / "train" / "spo_fr" / "train_log.csv");
  ASSERT_EQ(run("train " + cfg_arg() + " --variant spo_fr"), 0) << err();
  EXPECT_EQ(slurp(out() / "train" / "spo_fr" / "train_log.csv"), first);
}

TEST_F(Cli, CompareProducesOneRowPerCellAndIteration) {
  ASSERT_EQ(run("compare " + cfg_arg() + " --variants superflow,flow_grpo --seeds 1,2,3"), 0) << err();
  const auto dir = out() / "compare";
  const auto rows = read_compare(dir / "compare.csv");
  std::map<std::size_t, std::size_t> per_iteration;
  for (const auto& r : rows) per_iteration[r.iteration]++;
  // Evaluations at 0, 3 and 6.
  ASSERT_EQ(per_iteration.size(), 3u);
  for (const auto& [it, n] : per_iteration) EXPECT_EQ(n, 6u) << "iteration " << it;
  for (const char* cell : {"superflow_seed1", "superflow_seed3", "flow_grpo_seed2"}) {
    EXPECT_TRUE(fs::exists(dir / cell / "train_log.csv")) << cell;
  }
  EXPECT_TRUE(fs::exists(dir / "median_curves.svg"));
  EXPECT_TRUE(fs::exists(dir / "median_curve_superflow.svg"));
  EXPECT_EQ(csv::read(dir / "failures.csv").rows.size(), 0u);

}

TEST_F(Cli, ConfigSubcommandPrintsCanonicalForm) {
  ASSERT_EQ(run("config " + cfg_arg()), 0) << err();
  EXPECT_EQ(slurp(root_ / "stdout.txt"), serialize_config(small_config()));
  ASSERT_EQ(run("config"), 0);
  EXPECT_EQ(slurp(root_ / "stdout.txt"), serialize_config(default_run_config()));
}
