// Reproducible experiment runner for constant-random-perturbation training.
//
// Subcommands: train, attack, eval, sweep, compare, replay.
// Exit codes: 0 ok, 2 config error, 3 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "balltrain/experiment.hpp"

namespace fs = std::filesystem;
using namespace balltrain;

namespace {

ExperimentConfig load_config(const std::string& config_path, const std::string& preset,
                             int seeds_n, const std::string& out) {
  ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = parse_config(config_path);
  } else if (!preset.empty()) {
    cfg = parse_config_text("preset = " + preset + "\n", "<preset>");
  } else {
    throw ParseError("need --config or --preset");
  }
  if (!preset.empty() && !config_path.empty()) apply_preset(cfg, preset);
  if (seeds_n > 0) {
    cfg.seeds.clear();
    for (int i = 1; i <= seeds_n; ++i) cfg.seeds.push_back(std::uint64_t(i));
  }
  if (!out.empty()) cfg.out_dir = out;
  if (cfg.out_dir.empty()) throw ParseError("need --out (or 'out =' in the config)");
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constant-random-perturbation robust training toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, preset, eps_list_str = "0,0.05,0.1,0.15,0.2,0.25,0.3";
  std::string presets_str =
      "setting_A_mnist,setting_B_mnist,setting_C_mnist,setting_D_mnist,"
      "setting_E_mnist,setting_G_mnist";
  int seeds_n = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seeds", seeds_n, "override: use perturbation seeds 1..N");
    sub->add_option("--preset", preset, "apply a named preset");
  };

  auto* cmd_train = app.add_subcommand("train", "train models and write checkpoints");
  add_common(cmd_train);
  auto* cmd_attack = app.add_subcommand("attack", "write adversarial dumps for trained models");
  add_common(cmd_attack);
  auto* cmd_eval = app.add_subcommand("eval", "full run: train, attack, report.csv");
  add_common(cmd_eval);
  auto* cmd_sweep = app.add_subcommand("sweep", "adversarial accuracy across epsilon values");
  add_common(cmd_sweep);
  cmd_sweep->add_option("--eps", eps_list_str, "comma-separated ascending epsilon list");
  auto* cmd_compare = app.add_subcommand("compare", "run several setting presets side by side");
  add_common(cmd_compare);
  cmd_compare->add_option("--presets", presets_str, "comma-separated preset names");
  auto* cmd_replay = app.add_subcommand("replay", "re-run from an echoed config and compare");
  cmd_replay->add_option("--out", out_dir, "output directory of a finished run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_replay->parsed()) {
      const std::string echo_path = out_dir + "/config_resolved.txt";
      ExperimentConfig cfg = parse_config_text(slurp(echo_path), echo_path);
      const std::string replay_dir = out_dir + "_replay";
      run_experiment(cfg, replay_dir);
      const bool same = slurp(out_dir + "/report.csv") == slurp(replay_dir + "/report.csv");
      std::cout << (same ? "replay: report.csv identical\n"
                         : "replay: report.csv DIFFERS\n");
      return same ? 0 : 3;
    }

    ExperimentConfig cfg = load_config(config_path, preset, seeds_n, out_dir);

    if (cmd_train->parsed()) {
      cfg.attacks = {parse_attack_token("none")};
      run_experiment(cfg, cfg.out_dir);
      std::cout << "trained " << cfg.seeds.size() << " model(s) into " << cfg.out_dir << "\n";
    } else if (cmd_attack->parsed() || cmd_eval->parsed()) {
      ExperimentResult res = run_experiment(cfg, cfg.out_dir);
      std::cout << "report: " << res.report_csv << "\n";
    } else if (cmd_sweep->parsed()) {
      std::vector<double> eps_list;
      std::stringstream ss(eps_list_str);
      std::string tok;
      while (std::getline(ss, tok, ',')) eps_list.push_back(std::stod(tok));
      auto [train_ds, test_ds] = resolve_datasets(cfg);
      ExperimentConfig train_cfg = cfg;
      train_cfg.attacks = {parse_attack_token("none")};
      run_experiment(train_cfg, cfg.out_dir);
      ModelParams<float> model = load_checkpoint(cfg.out_dir + "/model0.ckpt", &cfg.arch);
      AttackConfig base;
      base.iterations = 20;
      base.random_start = cfg.pgd_random_start;
      base.rs_seed = derive_seed(cfg.master_seed, "attack_rs");
      auto curve = epsilon_sweep(model, test_ds, eps_list, base);
      std::ofstream f(cfg.out_dir + "/sweep.csv");
      f << "epsilon,accuracy_pct\n";
      for (auto [e, a] : curve) f << e << "," << format_pct(a) << "\n";
      std::cout << "sweep: " << cfg.out_dir << "/sweep.csv (" << curve.size() << " rows)\n";
    } else if (cmd_compare->parsed()) {
      std::vector<std::string> presets;
      std::stringstream ss(presets_str);
      std::string tok;
      while (std::getline(ss, tok, ',')) presets.push_back(tok);
      compare_settings(cfg, presets, cfg.out_dir);
      std::cout << "compare: " << cfg.out_dir << "/compare_report.csv\n";
    }
    return 0;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 3;
  }
}
