#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmcr/config.hpp"
#include "cmcr/harness.hpp"

namespace {

cmcr::config::ExperimentConfig resolve_config(const std::string& config_path,
                                              const std::string& preset_name) {
  if (!config_path.empty()) return cmcr::config::load_file(config_path);
  if (!preset_name.empty()) return cmcr::config::preset(preset_name);
  throw cmcr::ConfigError("either --config or --preset is required");
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find(',', pos);
    if (next == std::string::npos) next = text.size();
    values.push_back(std::stod(text.substr(pos, next - pos)));
    pos = next + 1;
  }
  return values;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  for (double v : parse_double_list(text)) values.push_back(static_cast<int>(v));
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cognitive multi-carrier radar frequency-selection laboratory"};
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir, checkpoint_path, policy_override, eval_mode;
  std::optional<std::uint64_t> seed;
  bool resume = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON file");
    cmd->add_option("--preset", preset_name, "built-in preset (c1..c4, fig1, markov16)");
    cmd->add_option("--seed", seed, "override the config seed list with one seed");
    cmd->add_option("--out", out_dir, "output directory (default: config out_dir)");
    cmd->add_option("--policy", policy_override, "override the config policy kind");
  };

  auto* train = app.add_subcommand("train", "train an ISPPO or OSPPO agent");
  add_common(train);
  train->add_flag("--resume", resume, "continue from an existing checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy over L slots");
  add_common(eval_cmd);
  int eval_slots = 0;
  eval_cmd->add_option("--checkpoint", checkpoint_path, "trainer checkpoint (learned policies)");
  eval_cmd->add_option("--slots", eval_slots, "evaluation slots (default: config eval_slots)");
  eval_cmd->add_option("--mode", eval_mode, "greedy|sample action selection");

  auto* curve = app.add_subcommand("detection-curve", "average detection rate vs SNR and M");
  add_common(curve);
  std::string snr_list = "-10,-5,0,5,10", m_list = "1,2,4,8";
  int curve_slots = 200;
  curve->add_option("--checkpoint", checkpoint_path, "trainer checkpoint (isppo)");
  curve->add_option("--snr-list", snr_list, "comma-separated SNR values in dB");
  curve->add_option("--m-list", m_list, "comma-separated frequency counts");
  curve->add_option("--slots", curve_slots, "slots per curve point");

  auto* dump = app.add_subcommand("spectrum-dump", "write the channel-evolution PGM/CSV");
  add_common(dump);
  int dump_slots = 65;
  dump->add_option("--slots", dump_slots, "number of slots to dump");

  auto* selftest = app.add_subcommand("selftest", "run the quick oracle suite");
  (void)selftest;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return cmcr::harness::kExitConfig;
  }

  try {
    if (selftest->parsed()) {
      const int failures = cmcr::harness::run_selftest(std::cout);
      std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
      return failures == 0 ? 0 : cmcr::harness::kExitNumerical;
    }

    auto config = resolve_config(config_path, preset_name);
    if (!policy_override.empty()) config.policy = policy_override;
    if (!eval_mode.empty()) config.eval_mode = eval_mode;
    config.validate();
    const std::string out = out_dir.empty() ? config.out_dir : out_dir;

    if (train->parsed()) {
      cmcr::harness::cmd_train(config, seed, out, resume);
      std::cout << "training complete; outputs under " << out << "\n";
    } else if (eval_cmd->parsed()) {
      const int slots = eval_slots > 0 ? eval_slots : config.eval_slots;
      cmcr::harness::cmd_eval(config, checkpoint_path, seed, slots, out, std::cout);
    } else if (curve->parsed()) {
      cmcr::harness::cmd_detection_curve(config, checkpoint_path, parse_double_list(snr_list),
                                         parse_int_list(m_list), curve_slots, out, std::cout);
    } else if (dump->parsed()) {
      cmcr::harness::cmd_spectrum_dump(config, seed.value_or(config.seeds.front()), dump_slots,
                                       out, std::cout);
    }
    return cmcr::harness::kExitOk;
  } catch (const cmcr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cmcr::harness::kExitConfig;
  } catch (const cmcr::StateMismatchError& e) {
    std::cerr << "state mismatch: " << e.what() << "\n";
    return cmcr::harness::kExitStateMismatch;
  } catch (const cmcr::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return cmcr::harness::kExitNumerical;
  } catch (const cmcr::TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return cmcr::harness::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
