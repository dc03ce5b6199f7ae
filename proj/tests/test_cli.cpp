#include <gtest/gtest.h>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "hilight/cli.hpp"

namespace hilight {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

ExperimentConfig tiny_cfg() {
  ExperimentConfig cfg;
  cfg.seeds = {1};
  cfg.episodes = 2;
  cfg.episode_seconds = 90;  // 6 control steps
  cfg.minibatch_steps = 6;
  cfg.epochs = 1;
  cfg.checkpoint_every = 1;
  return cfg;
}

TEST(ResolveOutDir, PrecedenceFlagThenEnvThenConfig) {
  unsetenv("HILIGHT_OUT_ROOT");
  EXPECT_EQ(resolve_out_dir("flagged", "cfg"), "flagged");
  EXPECT_EQ(resolve_out_dir("", "cfg"), "cfg");
  setenv("HILIGHT_OUT_ROOT", "env_root", 1);
  EXPECT_EQ(resolve_out_dir("", "cfg"), "env_root");
  EXPECT_EQ(resolve_out_dir("flagged", "cfg"), "flagged");
  unsetenv("HILIGHT_OUT_ROOT");
}

TEST(CmdGenerateScenario, WritesPublishedRatesAndRegenerates) {
  const std::string path = ::testing::TempDir() + "gen_scenario.txt";
  const std::string text = cmd_generate_scenario("grid4x4", "multimodal_gaussian", 7, path);
  EXPECT_EQ(read_file(path), text);
  EXPECT_NE(text.find("min_rate = 0.018"), std::string::npos);
  EXPECT_NE(text.find("max_rate = 0.038"), std::string::npos);
  const std::string again = cmd_generate_scenario("grid4x4", "multimodal_gaussian", 7, "");
  EXPECT_EQ(again, text);
  EXPECT_THROW(cmd_generate_scenario("grid7x7", "constant", 1, ""), std::invalid_argument);
}

TEST(CmdBaseline, RowsPerSeedPlusSummaryFooter) {
  const ScenarioSpec scenario = make_scenario("grid2x2", "constant", 1);
  const std::string csv = cmd_baseline(scenario, "maxpressure", {1, 2, 3}, 20);
  EXPECT_EQ(csv.rfind(kBaselineCsvSchema, 0), 0u);
  EXPECT_EQ(count_lines(csv), 7);  // schema + header + 3 rows + mean + std
  EXPECT_NE(csv.find("maxpressure,mean,"), std::string::npos);
  EXPECT_NE(csv.find("maxpressure,std,"), std::string::npos);
  EXPECT_EQ(cmd_baseline(scenario, "maxpressure", {1, 2, 3}, 20), csv);  // deterministic rerun
  EXPECT_THROW(cmd_baseline(scenario, "scats", {1}, 20), std::invalid_argument);
}

TEST(CmdTrain, WritesLogsCheckpointsAndSummary) {
  const ScenarioSpec scenario = make_scenario("grid2x2", "constant", 1);
  ExperimentConfig cfg = tiny_cfg();
  cfg.seeds = {1, 2};
  const std::string dir = ::testing::TempDir() + "cli_train";
  const TrainProduct p = cmd_train(cfg, scenario, dir);
  ASSERT_EQ(p.log_paths.size(), 2u);
  ASSERT_EQ(p.stats.size(), 2u);
  EXPECT_EQ(p.stats[0].size(), 2u);
  for (const std::string& path : p.log_paths) {
    const std::string log = read_file(path);
    EXPECT_EQ(log.rfind(kTrainLogHeader, 0), 0u) << path;
    EXPECT_EQ(count_lines(log), 3) << path;
  }
  for (const std::string& path : p.checkpoint_paths)
    EXPECT_EQ(Trainer::checkpoint_info(path).variant, "full") << path;
  EXPECT_EQ(p.summary_csv.rfind(kTrainSummaryCsvSchema, 0), 0u);
  EXPECT_EQ(count_lines(p.summary_csv), 4);  // schema + header + one row per seed
  EXPECT_EQ(read_file(dir + "/train_summary.csv"), p.summary_csv);

  // resuming requires a single seed
  EXPECT_THROW(cmd_train(cfg, scenario, dir, p.checkpoint_paths[0]), std::invalid_argument);
}

TEST(CmdTrain, ResumeContinuesFromCheckpoint) {
  const ScenarioSpec scenario = make_scenario("grid2x2", "constant", 1);
  const std::string dir = ::testing::TempDir() + "cli_resume";
  ExperimentConfig cfg = tiny_cfg();
  const TrainProduct first = cmd_train(cfg, scenario, dir);

  ExperimentConfig more = cfg;
  more.episodes = 3;
  const std::string dir2 = dir + "_continued";
  const TrainProduct second = cmd_train(more, scenario, dir2, first.checkpoint_paths[0]);
  ASSERT_EQ(second.stats[0].size(), 1u);  // episodes 0,1 already done
  EXPECT_EQ(second.stats[0][0].episode, 2);
}

TEST(CmdEvaluate, UntrainedCheckpointGivesFiniteMetrics) {
  const ScenarioSpec scenario = make_scenario("grid2x2", "constant", 1);
  ExperimentConfig cfg = tiny_cfg();
  cfg.episodes = 1;
  const std::string dir = ::testing::TempDir() + "cli_eval";
  const TrainProduct p = cmd_train(cfg, scenario, dir);
  const std::string csv = cmd_evaluate(p.checkpoint_paths[0], scenario, {5, 6}, 1, 6);
  EXPECT_EQ(csv.rfind(kEvaluateCsvSchema, 0), 0u);
  EXPECT_EQ(count_lines(csv), 6);  // schema + header + 2 rows + mean + std
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // schema
  std::getline(is, line);  // header
  EXPECT_EQ(line, "seed,episodes,att,adt,mean_reward");
  while (std::getline(is, line)) {
    const std::size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
    const double att = std::stod(line.substr(c2 + 1));
    EXPECT_TRUE(std::isfinite(att)) << line;
  }
  EXPECT_EQ(cmd_evaluate(p.checkpoint_paths[0], scenario, {5, 6}, 1, 6), csv);
  EXPECT_THROW(cmd_evaluate(dir + "/no_such.bin", scenario, {1}, 1, 6), std::runtime_error);
}

TEST(CmdAblate, SideBySideVariantColumnsOverSharedSeeds) {
  const ScenarioSpec scenario = make_scenario("grid2x2", "constant", 1);
  ExperimentConfig cfg = tiny_cfg();
  const std::string dir = ::testing::TempDir() + "cli_ablate";
  const std::string csv = cmd_ablate(cfg, scenario, {"full", "no_meta"}, dir);
  EXPECT_EQ(csv.rfind(kAblateCsvSchema, 0), 0u);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // schema
  std::getline(is, line);
  EXPECT_EQ(line, "episode,full,no_meta");
  int rows = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 2) << line;
    ++rows;
  }
  EXPECT_EQ(rows, cfg.episodes);
  EXPECT_EQ(read_file(dir + "/ablate.csv"), csv);
  // both variants trained under the shared seed: per-variant logs exist
  EXPECT_EQ(count_lines(read_file(dir + "/train_full_seed1.csv")), 3);
  EXPECT_EQ(count_lines(read_file(dir + "/train_no_meta_seed1.csv")), 3);
  EXPECT_THROW(cmd_ablate(cfg, scenario, {"full", "half"}, dir), std::invalid_argument);
}

}  // namespace
}  // namespace hilight
