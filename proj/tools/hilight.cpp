// Experiment driver: scenario generation, classical baselines, training,
// checkpoint evaluation, and ablation sweeps over plaintext config files.
//
// Exit codes: 0 success, 1 usage error, 2 invalid input (config, scenario,
// flag values), 3 runtime failure (I/O, checkpoint mismatch, divergence).

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hilight/cli.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_csv(const std::string& value) {
  return hilight::kv::to_seed_list({"cli", "seed", value, 0});
}

std::vector<std::string> split_csv(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(value);
  while (std::getline(is, item, ',')) {
    const std::string t = hilight::kv::trim(item);
    if (t.empty()) throw std::invalid_argument("empty element in list: " + value);
    out.push_back(t);
  }
  if (out.empty()) throw std::invalid_argument("expected a comma-separated list, got: " + value);
  return out;
}

// Shared config assembly for train/ablate: file (if any), then flag overrides.
struct RunFlags {
  std::string config_path, scenario_path, seed_csv, variant, out_dir, checkpoint;
  int episodes = -1;
  bool strict = false;
};

hilight::ExperimentConfig assemble_config(const RunFlags& f) {
  hilight::ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = hilight::load_config(f.config_path);
  if (!f.scenario_path.empty()) cfg.scenario = f.scenario_path;
  if (!f.seed_csv.empty()) cfg.seeds = parse_seed_csv(f.seed_csv);
  if (!f.variant.empty()) cfg.variant = f.variant;
  if (f.episodes > 0) cfg.episodes = f.episodes;
  if (f.strict) cfg.strict_paper_mode = true;
  cfg.validate();
  if (cfg.scenario.empty())
    throw std::invalid_argument("no scenario file: pass --scenario or set it in the config");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hilight: hierarchical traffic-signal control experiments"};
  app.require_subcommand(1);

  // generate-scenario
  std::string gen_kind, gen_pattern = "multimodal_gaussian", gen_out;
  std::uint64_t gen_seed = 1;
  CLI::App* gen = app.add_subcommand("generate-scenario", "Write a canonical scenario file");
  gen->add_option("--kind", gen_kind, "grid2x2 | grid4x4 | grid5x5")->required();
  gen->add_option("--pattern", gen_pattern,
                  "constant | multimodal_gaussian | peak_transition | holiday_rush");
  gen->add_option("--seed", gen_seed, "arrival-stream seed");
  gen->add_option("--out", gen_out, "output file (default <kind>_<pattern>_seed<seed>.txt)");

  // baseline
  std::string base_scenario, base_controller, base_seeds = "1", base_out;
  CLI::App* base = app.add_subcommand("baseline", "Run a classical controller over seeds");
  base->add_option("--scenario", base_scenario, "scenario file")->required();
  base->add_option("--controller", base_controller, "ftc | maxpressure")->required();
  base->add_option("--seed", base_seeds, "comma-separated seed list");
  base->add_option("--out", base_out, "output directory");

  // train
  RunFlags trainf;
  CLI::App* train = app.add_subcommand("train", "Train one run per seed");
  train->add_option("--config", trainf.config_path, "experiment config file");
  train->add_option("--scenario", trainf.scenario_path, "scenario file (overrides config)");
  train->add_option("--seed", trainf.seed_csv, "comma-separated seed list (overrides config)");
  train->add_option("--variant", trainf.variant,
                    "full | no_gac | no_global_feature | no_subgoal | no_meta");
  train->add_option("--episodes", trainf.episodes, "episodes per run (overrides config)");
  train->add_option("--out", trainf.out_dir, "output directory");
  train->add_option("--checkpoint", trainf.checkpoint, "resume a single-seed run from this file");
  train->add_flag("--strict-paper-mode", trainf.strict, "crossed goal-discrepancy pairing");

  // evaluate
  std::string eval_ckpt, eval_scenario, eval_seeds = "1", eval_out;
  int eval_episodes = 1;
  CLI::App* eval = app.add_subcommand("evaluate", "Greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--scenario", eval_scenario, "scenario file")->required();
  eval->add_option("--seed", eval_seeds, "comma-separated seed list");
  eval->add_option("--episodes", eval_episodes, "evaluation episodes per seed");
  eval->add_option("--out", eval_out, "output directory");

  // ablate
  RunFlags ablatef;
  std::string ablate_variants = "full,no_meta";
  CLI::App* ablate = app.add_subcommand("ablate", "Train variants side by side on shared seeds");
  ablate->add_option("--config", ablatef.config_path, "experiment config file");
  ablate->add_option("--scenario", ablatef.scenario_path, "scenario file (overrides config)");
  ablate->add_option("--seed", ablatef.seed_csv, "comma-separated seed list (overrides config)");
  ablate->add_option("--variants", ablate_variants, "comma-separated variant list");
  ablate->add_option("--episodes", ablatef.episodes, "episodes per run (overrides config)");
  ablate->add_option("--out", ablatef.out_dir, "output directory");
  ablate->add_flag("--strict-paper-mode", ablatef.strict, "crossed goal-discrepancy pairing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      std::string out = gen_out.empty()
                            ? gen_kind + "_" + gen_pattern + "_seed" + std::to_string(gen_seed) + ".txt"
                            : gen_out;
      hilight::cmd_generate_scenario(gen_kind, gen_pattern, gen_seed, out);
      std::printf("wrote %s\n", out.c_str());
    } else if (base->parsed()) {
      const hilight::ScenarioSpec scenario = hilight::load_scenario(base_scenario);
      const std::string csv =
          hilight::cmd_baseline(scenario, base_controller, parse_seed_csv(base_seeds),
                                hilight::ExperimentConfig{}.control_steps());
      const std::string dir = hilight::resolve_out_dir(base_out, "runs");
      hilight::ensure_dir(dir);
      const std::string path = dir + "/baseline_" + base_controller + ".csv";
      hilight::write_text_file(path, csv);
      std::fputs(csv.c_str(), stdout);
      std::printf("wrote %s\n", path.c_str());
    } else if (train->parsed()) {
      const hilight::ExperimentConfig cfg = assemble_config(trainf);
      const hilight::ScenarioSpec scenario = hilight::load_scenario(cfg.scenario);
      const std::string dir = hilight::resolve_out_dir(trainf.out_dir, cfg.out_dir);
      const hilight::TrainProduct product =
          hilight::cmd_train(cfg, scenario, dir, trainf.checkpoint);
      std::fputs(product.summary_csv.c_str(), stdout);
      for (const std::string& p : product.log_paths) std::printf("wrote %s\n", p.c_str());
      for (const std::string& p : product.checkpoint_paths) std::printf("wrote %s\n", p.c_str());
    } else if (eval->parsed()) {
      const hilight::ScenarioSpec scenario = hilight::load_scenario(eval_scenario);
      const std::string csv =
          hilight::cmd_evaluate(eval_ckpt, scenario, parse_seed_csv(eval_seeds), eval_episodes,
                                hilight::ExperimentConfig{}.control_steps());
      const std::string dir = hilight::resolve_out_dir(eval_out, "runs");
      hilight::ensure_dir(dir);
      const std::string path = dir + "/evaluate.csv";
      hilight::write_text_file(path, csv);
      std::fputs(csv.c_str(), stdout);
      std::printf("wrote %s\n", path.c_str());
    } else if (ablate->parsed()) {
      const hilight::ExperimentConfig cfg = assemble_config(ablatef);
      const hilight::ScenarioSpec scenario = hilight::load_scenario(cfg.scenario);
      const std::string dir = hilight::resolve_out_dir(ablatef.out_dir, cfg.out_dir);
      const std::string csv =
          hilight::cmd_ablate(cfg, scenario, split_csv(ablate_variants), dir);
      std::fputs(csv.c_str(), stdout);
      std::printf("wrote %s/ablate.csv\n", dir.c_str());
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
