#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "superflow/superflow.hpp"

namespace sf = superflow;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kNumericalError = 2 };

std::vector<std::string> split_csv_arg(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_csv_arg(s)) {
    try {
      out.push_back(sf::detail::parse_u64(item));
    } catch (const std::exception&) {
      throw sf::ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RL fine-tuning of toy rectified-flow models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string variant_name;
  std::string variants_arg;
  std::string seeds_arg;
  std::string report_dir;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Flow-matching pretraining; writes checkpoint and loss CSV");
  pretrain_cmd->add_option("config", config_path, "Config file")->required();

  auto* train_cmd = app.add_subcommand("train", "RL fine-tuning of the pretrained checkpoint");
  train_cmd->add_option("config", config_path, "Config file")->required();
  train_cmd->add_option("--variant", variant_name, "flow_grpo | flow_spo | spo_fr | superflow")->required();

  auto* compare_cmd = app.add_subcommand("compare", "Run variant x seed cells from a shared pretrained model");
  compare_cmd->add_option("config", config_path, "Config file")->required();
  compare_cmd->add_option("--variants", variants_arg, "Comma-separated variants")->required();
  compare_cmd->add_option("--seeds", seeds_arg, "Comma-separated seeds")->required();

  auto* report_cmd = app.add_subcommand("report", "Recompute summaries and plots from a run directory");
  report_cmd->add_option("dir", report_dir, "Output directory")->required();

  auto* config_cmd = app.add_subcommand("config", "Print a config in canonical form (the default one without argument)");
  config_cmd->add_option("config", config_path, "Config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  std::ostream* progress = quiet ? nullptr : &std::cerr;
  try {
    if (*config_cmd) {
      const auto cfg = config_path.empty() ? sf::default_run_config() : sf::load_config(config_path);
      std::cout << sf::serialize_config(cfg);
      return kOk;
    }
    if (*report_cmd) {
      const auto mismatches = sf::run_report(report_dir, std::cout);
      if (mismatches > 0) {
        std::cerr << "error: " << mismatches << " summaries do not match their logs\n";
        return kConfigError;
      }
      return kOk;
    }
    const auto cfg = sf::load_config(config_path);
    if (*pretrain_cmd) {
      const auto out = sf::run_pretrain(cfg, progress);
      std::cout << "checkpoint " << out.checkpoint.string() << "\n"
                << "loss " << out.loss_csv.string() << "\n"
                << "final smoothed loss " << out.result.final_smoothed_loss << "\n";
    } else if (*train_cmd) {
      const auto variant = sf::variant_from_string(variant_name);
      const auto art = sf::run_train(cfg, variant, progress);
      std::cout << "output " << sf::train_dir(cfg, variant).string() << "\n"
                << "baseline eval " << art.summary.baseline_eval_reward << "\n"
                << "final eval " << art.summary.final_eval_reward << "\n"
                << "rollouts to threshold " << art.summary.rollouts_to_threshold << "\n"
                << "late max drawdown " << art.summary.late_max_drawdown << "\n";
    } else if (*compare_cmd) {
      std::vector<sf::Variant> variants;
      for (const auto& v : split_csv_arg(variants_arg)) variants.push_back(sf::variant_from_string(v));
      const auto out = sf::run_compare(cfg, variants, parse_seeds(seeds_arg), progress);
      std::cout << "compare " << (out.dir / "compare.csv").string() << "\n";
      if (!out.failures.empty()) {
        std::cerr << out.failures.size() << " cell(s) failed; see failures.csv\n";
        return kNumericalError;
      }
    }
  } catch (const sf::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
