#pragma once

// Experiment front-end commands. Each command is a pure function of its
// arguments (plus the files they name): it returns the CSV/text product and
// writes any side outputs under an explicit directory, so reruns with the
// same inputs are byte-identical. The thin binary wrapper owns flag parsing
// and exit codes.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hilight/scenario.hpp"
#include "hilight/training.hpp"

namespace hilight {

// CSV schema tags; bump the suffix when a column set changes.
inline constexpr const char* kBaselineCsvSchema = "# hilight.baseline.v1";
inline constexpr const char* kEvaluateCsvSchema = "# hilight.evaluate.v1";
inline constexpr const char* kAblateCsvSchema = "# hilight.ablate.v1";
inline constexpr const char* kTrainSummaryCsvSchema = "# hilight.train_summary.v1";

// Output root precedence: explicit flag, then the environment override, then
// the config value.
inline std::string resolve_out_dir(const std::string& flag_value, const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("HILIGHT_OUT_ROOT"); env != nullptr && *env != '\0')
    return env;
  return config_value;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
}

namespace detail {

// Sample standard deviation; one observation has no spread.
inline double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

inline double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

}  // namespace detail

// ---------------------------------------------------------------- commands

// Writes the canonical scenario file for a (kind, pattern, seed) triple and
// returns its text. Regeneration with the same arguments is byte-identical.
inline std::string cmd_generate_scenario(const std::string& kind, const std::string& pattern,
                                         std::uint64_t seed, const std::string& out_path) {
  const std::string text = serialize_scenario(make_scenario(kind, pattern, seed));
  if (!out_path.empty()) write_text_file(out_path, text);
  return text;
}

// One episode per seed under a fixed classical controller; per-seed rows plus
// a mean and sample-std footer.
inline std::string cmd_baseline(const ScenarioSpec& scenario, const std::string& controller,
                                const std::vector<std::uint64_t>& seeds, int control_steps) {
  if (seeds.empty()) throw std::invalid_argument("baseline: seeds must be nonempty");
  if (control_steps < 1) throw std::invalid_argument("baseline: control_steps must be >= 1");
  const Network net = scenario.build_network();
  std::ostringstream os;
  os << kBaselineCsvSchema << '\n';
  os << "controller,seed,att,adt\n";
  std::vector<double> atts, adts;
  for (std::uint64_t seed : seeds) {
    double att = 0.0, adt = 0.0;
    try {
      std::tie(att, adt) = run_controller_episode(net, scenario.flow, control_steps, seed, controller);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("baseline episode with seed " + std::to_string(seed) +
                               " failed: " + e.what());
    }
    atts.push_back(att);
    adts.push_back(adt);
    os << controller << ',' << seed << ',' << format_double(att) << ',' << format_double(adt)
       << '\n';
  }
  const double att_m = detail::mean_of(atts), adt_m = detail::mean_of(adts);
  os << controller << ",mean," << format_double(att_m) << ',' << format_double(adt_m) << '\n';
  os << controller << ",std," << format_double(detail::sample_std(atts, att_m)) << ','
     << format_double(detail::sample_std(adts, adt_m)) << '\n';
  return os.str();
}

struct TrainProduct {
  std::vector<std::string> log_paths, checkpoint_paths;
  std::vector<std::vector<EpisodeStats>> stats;  // per seed, per episode
  std::string summary_csv;
};

// Trains one run per seed; logs and checkpoints land in out_dir. A nonempty
// resume_checkpoint continues a single-seed run from that file.
inline TrainProduct cmd_train(const ExperimentConfig& cfg, const ScenarioSpec& scenario,
                              const std::string& out_dir,
                              const std::string& resume_checkpoint = "") {
  cfg.validate();
  if (!resume_checkpoint.empty() && cfg.seeds.size() != 1)
    throw std::invalid_argument("train: resuming from a checkpoint needs exactly one seed");
  ensure_dir(out_dir);
  const Network net = scenario.build_network();
  TrainProduct out;
  std::ostringstream summary;
  summary << kTrainSummaryCsvSchema << '\n';
  summary << "seed,variant,episodes,final_mean_reward,final_att,final_adt\n";
  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = cfg.variant + "_seed" + std::to_string(seed);
    const std::string log_path = out_dir + "/train_" + tag + ".csv";
    const std::string ckpt_path = out_dir + "/ckpt_" + tag + ".bin";
    Trainer tr(net, scenario.flow, make_train_config(cfg, seed, log_path, ckpt_path));
    if (!resume_checkpoint.empty()) tr.load_checkpoint(resume_checkpoint);
    std::vector<EpisodeStats> stats = tr.train();
    const EpisodeStats last = stats.empty() ? EpisodeStats{} : stats.back();
    summary << seed << ',' << cfg.variant << ',' << stats.size() << ','
            << format_double(last.mean_reward) << ',' << format_double(last.att) << ','
            << format_double(last.adt) << '\n';
    out.log_paths.push_back(log_path);
    out.checkpoint_paths.push_back(ckpt_path);
    out.stats.push_back(std::move(stats));
  }
  out.summary_csv = summary.str();
  write_text_file(out_dir + "/train_summary.csv", out.summary_csv);
  return out;
}

// Greedy-action evaluation of a stored checkpoint; per-seed rows plus a mean
// and sample-std footer.
inline std::string cmd_evaluate(const std::string& checkpoint_path, const ScenarioSpec& scenario,
                                const std::vector<std::uint64_t>& seeds, int eval_episodes,
                                int control_steps) {
  if (seeds.empty()) throw std::invalid_argument("evaluate: seeds must be nonempty");
  if (eval_episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  if (control_steps < 1) throw std::invalid_argument("evaluate: control_steps must be >= 1");
  const Trainer::CheckpointInfo info = Trainer::checkpoint_info(checkpoint_path);
  const Network net = scenario.build_network();
  TrainConfig t;
  t.seed = info.seed;
  t.variant = info.variant;
  t.control_steps = control_steps;
  Trainer tr(net, scenario.flow, t);
  tr.load_checkpoint(checkpoint_path);
  std::ostringstream os;
  os << kEvaluateCsvSchema << '\n';
  os << "seed,episodes,att,adt,mean_reward\n";
  std::vector<double> atts, adts, rewards;
  for (std::uint64_t seed : seeds) {
    const EvalResult ev = tr.evaluate(eval_episodes, seed);
    atts.push_back(ev.att);
    adts.push_back(ev.adt);
    rewards.push_back(ev.mean_reward);
    os << seed << ',' << eval_episodes << ',' << format_double(ev.att) << ','
       << format_double(ev.adt) << ',' << format_double(ev.mean_reward) << '\n';
  }
  const double att_m = detail::mean_of(atts), adt_m = detail::mean_of(adts),
               rew_m = detail::mean_of(rewards);
  os << "mean," << eval_episodes << ',' << format_double(att_m) << ',' << format_double(adt_m)
     << ',' << format_double(rew_m) << '\n';
  os << "std," << eval_episodes << ',' << format_double(detail::sample_std(atts, att_m)) << ','
     << format_double(detail::sample_std(adts, adt_m)) << ','
     << format_double(detail::sample_std(rewards, rew_m)) << '\n';
  return os.str();
}

// Runs each variant with the shared seed list and equal budgets; emits the
// per-episode mean reward (averaged across seeds) side by side, one column
// per variant.
inline std::string cmd_ablate(const ExperimentConfig& cfg, const ScenarioSpec& scenario,
                              const std::vector<std::string>& variants,
                              const std::string& out_dir) {
  if (variants.empty()) throw std::invalid_argument("ablate: variants must be nonempty");
  for (const std::string& v : variants) ablation_flags(v);  // reject unknown names up front
  ensure_dir(out_dir);
  std::vector<TrainProduct> products;
  for (const std::string& v : variants) {
    ExperimentConfig run = cfg;
    run.variant = v;
    products.push_back(cmd_train(run, scenario, out_dir));
  }
  std::ostringstream os;
  os << kAblateCsvSchema << '\n';
  os << "episode";
  for (const std::string& v : variants) os << ',' << v;
  os << '\n';
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    os << ep;
    for (const TrainProduct& p : products) {
      std::vector<double> rewards;
      for (const auto& run : p.stats)
        if (ep < static_cast<int>(run.size()))
          rewards.push_back(run[static_cast<std::size_t>(ep)].mean_reward);
      os << ',' << (rewards.empty() ? "" : format_double(detail::mean_of(rewards)));
    }
    os << '\n';
  }
  const std::string csv = os.str();
  write_text_file(out_dir + "/ablate.csv", csv);
  return csv;
}

}  // namespace hilight
