#pragma once

// Plaintext experiment files: scenario descriptions and run configuration as
// key-value sections. Parsing is strict (unknown keys rejected, line numbers
// in errors) and serialization is canonical, so parse -> serialize -> parse
// is a fixed point and regenerated files are byte-identical.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hilight/network.hpp"
#include "hilight/simulator.hpp"
#include "hilight/training.hpp"

namespace hilight {

// ------------------------------------------------------------ key-value core

struct KvEntry {
  std::string section, key, value;
  int line = 0;
};

namespace kv {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] inline void fail(const KvEntry& e, const std::string& what) {
  throw std::invalid_argument("line " + std::to_string(e.line) + ": " + what + " [" + e.section +
                              "] " + e.key + " = " + e.value);
}

inline double to_double(const KvEntry& e) {
  const char* s = e.value.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0') fail(e, "expected a number for");
  return v;
}

inline int to_int(const KvEntry& e) {
  const char* s = e.value.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0' || v < -2147483648LL || v > 2147483647LL)
    fail(e, "expected an integer for");
  return static_cast<int>(v);
}

inline std::uint64_t to_u64(const KvEntry& e) {
  const char* s = e.value.c_str();
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0' || e.value[0] == '-') fail(e, "expected an unsigned integer for");
  return static_cast<std::uint64_t>(v);
}

inline bool to_bool(const KvEntry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  fail(e, "expected true/false for");
}

inline std::vector<std::uint64_t> to_seed_list(const KvEntry& e) {
  std::vector<std::uint64_t> out;
  if (!e.value.empty() && e.value.back() == ',') fail(e, "trailing comma in list for");
  std::string item;
  std::istringstream is(e.value);
  while (std::getline(is, item, ',')) {
    KvEntry one{e.section, e.key, trim(item), e.line};
    if (one.value.empty()) fail(e, "empty element in list for");
    out.push_back(to_u64(one));
  }
  if (out.empty()) fail(e, "expected a comma-separated list for");
  return out;
}

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(seeds[i]);
  }
  return s;
}

}  // namespace kv

// Splits a file into (section, key, value) entries. Blank lines and '#'
// comments are skipped; keys must follow a [section] header.
inline std::vector<KvEntry> parse_kv(const std::string& text) {
  std::vector<KvEntry> out;
  std::string section, line;
  std::istringstream is(text);
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = kv::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw std::invalid_argument("line " + std::to_string(lineno) + ": malformed section header " + t);
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value, got " + t);
    if (section.empty())
      throw std::invalid_argument("line " + std::to_string(lineno) + ": key before any [section]");
    KvEntry e{section, kv::trim(t.substr(0, eq)), kv::trim(t.substr(eq + 1)), lineno};
    if (e.key.empty()) throw std::invalid_argument("line " + std::to_string(lineno) + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write file: " + path);
  os << text;
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path);
}

// ------------------------------------------------------------------ scenario

// A reproducible experiment world: grid dimensions, the region grid used by
// the high-level policy, and the arrival process.
struct ScenarioSpec {
  std::string kind = "grid2x2";
  int rows = 2, cols = 2;
  double link_length = 200.0;
  double speed_limit = 13.89;
  int region_rows = 1, region_cols = 1;
  FlowSpec flow;

  void validate() const {
    if (kind.empty()) throw std::invalid_argument("scenario: kind must be nonempty");
    if (rows < 1 || cols < 1) throw std::invalid_argument("scenario: grid dims must be >= 1");
    if (!(link_length > 0.0)) throw std::invalid_argument("scenario: link_length must be > 0");
    if (!(speed_limit > 0.0)) throw std::invalid_argument("scenario: speed_limit must be > 0");
    if (region_rows < 1 || region_cols < 1)
      throw std::invalid_argument("scenario: region dims must be >= 1");
    flow.validate();
  }

  Network build_network() const {
    validate();
    Network net = build_grid_network(rows, cols, link_length, speed_limit);
    partition_regions(net, region_rows, region_cols);
    return net;
  }
};

// Per-kind grid dimensions, region grid, and network-wide arrival-rate band.
struct GridPreset {
  int rows, cols, region_rows, region_cols;
  double min_rate, max_rate;
};

inline GridPreset grid_preset(const std::string& kind) {
  if (kind == "grid2x2") return {2, 2, 1, 1, 0.05, 0.30};
  if (kind == "grid4x4") return {4, 4, 2, 2, 0.018, 0.038};
  if (kind == "grid5x5") return {5, 5, 2, 2, 0.033, 0.379};
  throw std::invalid_argument("unknown scenario kind: " + kind);
}

// Canonical three-mode mixture across a standard hour-long episode.
inline std::vector<FlowSpec::Component> standard_mixture() {
  return {{900.0, 300.0, 0.4}, {1800.0, 300.0, 0.3}, {2700.0, 300.0, 0.3}};
}

inline ScenarioSpec make_scenario(const std::string& kind, const std::string& pattern,
                                  std::uint64_t seed) {
  const GridPreset p = grid_preset(kind);
  ScenarioSpec s;
  s.kind = kind;
  s.rows = p.rows;
  s.cols = p.cols;
  s.region_rows = p.region_rows;
  s.region_cols = p.region_cols;
  s.flow.pattern = flow_pattern_from_string(pattern);
  s.flow.min_rate = p.min_rate;
  s.flow.max_rate = p.max_rate;
  s.flow.seed = seed;
  if (s.flow.pattern == FlowSpec::Pattern::MultimodalGaussian ||
      s.flow.pattern == FlowSpec::Pattern::HolidayRush)
    s.flow.components = standard_mixture();
  s.validate();
  return s;
}

inline std::string serialize_scenario(const ScenarioSpec& s) {
  std::ostringstream os;
  os << "[scenario]\n";
  os << "kind = " << s.kind << '\n';
  os << "rows = " << s.rows << '\n';
  os << "cols = " << s.cols << '\n';
  os << "link_length = " << format_double(s.link_length) << '\n';
  os << "speed_limit = " << format_double(s.speed_limit) << '\n';
  os << "region_rows = " << s.region_rows << '\n';
  os << "region_cols = " << s.region_cols << '\n';
  os << '\n';
  os << "[flow]\n";
  os << "pattern = " << to_string(s.flow.pattern) << '\n';
  os << "min_rate = " << format_double(s.flow.min_rate) << '\n';
  os << "max_rate = " << format_double(s.flow.max_rate) << '\n';
  os << "seed = " << s.flow.seed << '\n';
  os << "components = " << s.flow.components.size() << '\n';
  for (std::size_t i = 0; i < s.flow.components.size(); ++i) {
    const auto& c = s.flow.components[i];
    os << "component_" << i << " = " << format_double(c.peak_time) << ' '
       << format_double(c.std_dev) << ' ' << format_double(c.weight) << '\n';
  }
  return os.str();
}

inline FlowSpec::Component parse_component(const KvEntry& e) {
  std::istringstream is(e.value);
  std::string a, b, c, extra;
  if (!(is >> a >> b >> c) || (is >> extra))
    kv::fail(e, "expected 'peak_time std_dev weight' for");
  FlowSpec::Component out;
  out.peak_time = kv::to_double({e.section, e.key, a, e.line});
  out.std_dev = kv::to_double({e.section, e.key, b, e.line});
  out.weight = kv::to_double({e.section, e.key, c, e.line});
  return out;
}

inline ScenarioSpec parse_scenario(const std::string& text) {
  ScenarioSpec s;
  const std::vector<KvEntry> entries = parse_kv(text);

  // component count first so component_<i> keys can be bounds-checked
  int declared = 0;
  for (const KvEntry& e : entries)
    if (e.section == "flow" && e.key == "components") declared = kv::to_int(e);
  if (declared < 0) throw std::invalid_argument("scenario: components must be >= 0");
  s.flow.components.assign(static_cast<std::size_t>(declared), FlowSpec::Component{});
  std::vector<bool> seen(static_cast<std::size_t>(declared), false);

  for (const KvEntry& e : entries) {
    if (e.section == "scenario") {
      if (e.key == "kind") s.kind = e.value;
      else if (e.key == "rows") s.rows = kv::to_int(e);
      else if (e.key == "cols") s.cols = kv::to_int(e);
      else if (e.key == "link_length") s.link_length = kv::to_double(e);
      else if (e.key == "speed_limit") s.speed_limit = kv::to_double(e);
      else if (e.key == "region_rows") s.region_rows = kv::to_int(e);
      else if (e.key == "region_cols") s.region_cols = kv::to_int(e);
      else kv::fail(e, "unknown key");
    } else if (e.section == "flow") {
      if (e.key == "pattern") s.flow.pattern = flow_pattern_from_string(e.value);
      else if (e.key == "min_rate") s.flow.min_rate = kv::to_double(e);
      else if (e.key == "max_rate") s.flow.max_rate = kv::to_double(e);
      else if (e.key == "seed") s.flow.seed = kv::to_u64(e);
      else if (e.key == "components") continue;
      else if (e.key.rfind("component_", 0) == 0) {
        const KvEntry idx{e.section, e.key, e.key.substr(10), e.line};
        const int i = kv::to_int(idx);
        if (i < 0 || i >= declared) kv::fail(e, "component index out of range for");
        s.flow.components[static_cast<std::size_t>(i)] = parse_component(e);
        seen[static_cast<std::size_t>(i)] = true;
      } else kv::fail(e, "unknown key");
    } else {
      kv::fail(e, "unknown section for");
    }
  }
  for (int i = 0; i < declared; ++i)
    if (!seen[static_cast<std::size_t>(i)])
      throw std::invalid_argument("scenario: missing component_" + std::to_string(i));
  s.validate();
  return s;
}

inline ScenarioSpec load_scenario(const std::string& path) {
  try {
    return parse_scenario(read_text_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- run config

// Everything a run needs beyond the scenario itself. Every field has a
// default; unknown keys are rejected on parse.
struct ExperimentConfig {
  std::string scenario;  // scenario file path; commands that need one check it
  std::vector<std::uint64_t> seeds = {1};
  std::string variant = "full";
  int episodes = 100;
  int parallel_envs = 1;
  std::string out_dir = "runs";
  int checkpoint_every = 10;
  bool strict_paper_mode = false;

  LossWeights w;

  double lr = 3e-4;
  double max_grad_norm = 10.0;
  int epochs = 4;
  int minibatch_steps = 60;
  int pretrain_episodes = 0;

  // episode shape; the signal timing values are compiled into the simulator
  // and a config may only restate them
  int episode_seconds = 3600;
  int control_interval_s = kControlIntervalS;
  int yellow_s = kYellowS;

  int control_steps() const { return episode_seconds / control_interval_s; }

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    if (episodes < 1) throw std::invalid_argument("config: episodes must be >= 1");
    if (parallel_envs < 1) throw std::invalid_argument("config: parallel_envs must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("config: checkpoint_every must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
    if (!(max_grad_norm > 0.0)) throw std::invalid_argument("config: max_grad_norm must be > 0");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (minibatch_steps < 1) throw std::invalid_argument("config: minibatch_steps must be >= 1");
    if (pretrain_episodes < 0) throw std::invalid_argument("config: pretrain_episodes must be >= 0");
    if (control_interval_s != kControlIntervalS)
      throw std::invalid_argument("config: control_interval_s must be " +
                                  std::to_string(kControlIntervalS) + " (compiled into the simulator)");
    if (yellow_s != kYellowS)
      throw std::invalid_argument("config: yellow_s must be " + std::to_string(kYellowS) +
                                  " (compiled into the simulator)");
    if (episode_seconds < control_interval_s || episode_seconds % control_interval_s != 0)
      throw std::invalid_argument("config: episode_seconds must be a positive multiple of the control interval");
    if (!(w.clip_eps > 0.0)) throw std::invalid_argument("config: clip_eps must be > 0");
    if (!(w.gamma > 0.0) || w.gamma > 1.0) throw std::invalid_argument("config: gamma must be in (0, 1]");
    if (w.lambda < 0.0 || w.lambda > 1.0) throw std::invalid_argument("config: lambda must be in [0, 1]");
    if (w.beta_w < 0.0 || w.beta_q < 0.0 || w.eta1 < 0.0 || w.eta2 < 0.0 ||
        w.entropy_coef < 0.0 || w.value_coef < 0.0)
      throw std::invalid_argument("config: loss weights must be >= 0");
    ablation_flags(variant);  // throws on an unknown variant
  }
};

inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "[experiment]\n";
  os << "scenario = " << c.scenario << '\n';
  os << "seeds = " << kv::join_seeds(c.seeds) << '\n';
  os << "variant = " << c.variant << '\n';
  os << "episodes = " << c.episodes << '\n';
  os << "parallel_envs = " << c.parallel_envs << '\n';
  os << "out_dir = " << c.out_dir << '\n';
  os << "checkpoint_every = " << c.checkpoint_every << '\n';
  os << "strict_paper_mode = " << (c.strict_paper_mode ? "true" : "false") << '\n';
  os << '\n';
  os << "[loss]\n";
  os << "beta_w = " << format_double(c.w.beta_w) << '\n';
  os << "beta_q = " << format_double(c.w.beta_q) << '\n';
  os << "eta1 = " << format_double(c.w.eta1) << '\n';
  os << "eta2 = " << format_double(c.w.eta2) << '\n';
  os << "clip_eps = " << format_double(c.w.clip_eps) << '\n';
  os << "entropy_coef = " << format_double(c.w.entropy_coef) << '\n';
  os << "value_coef = " << format_double(c.w.value_coef) << '\n';
  os << "gamma = " << format_double(c.w.gamma) << '\n';
  os << "lambda = " << format_double(c.w.lambda) << '\n';
  os << '\n';
  os << "[training]\n";
  os << "lr = " << format_double(c.lr) << '\n';
  os << "max_grad_norm = " << format_double(c.max_grad_norm) << '\n';
  os << "epochs = " << c.epochs << '\n';
  os << "minibatch_steps = " << c.minibatch_steps << '\n';
  os << "pretrain_episodes = " << c.pretrain_episodes << '\n';
  os << '\n';
  os << "[simulator]\n";
  os << "episode_seconds = " << c.episode_seconds << '\n';
  os << "control_interval_s = " << c.control_interval_s << '\n';
  os << "yellow_s = " << c.yellow_s << '\n';
  return os.str();
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  for (const KvEntry& e : parse_kv(text)) {
    if (e.section == "experiment") {
      if (e.key == "scenario") c.scenario = e.value;
      else if (e.key == "seeds") c.seeds = kv::to_seed_list(e);
      else if (e.key == "variant") c.variant = e.value;
      else if (e.key == "episodes") c.episodes = kv::to_int(e);
      else if (e.key == "parallel_envs") c.parallel_envs = kv::to_int(e);
      else if (e.key == "out_dir") c.out_dir = e.value;
      else if (e.key == "checkpoint_every") c.checkpoint_every = kv::to_int(e);
      else if (e.key == "strict_paper_mode") c.strict_paper_mode = kv::to_bool(e);
      else kv::fail(e, "unknown key");
    } else if (e.section == "loss") {
      if (e.key == "beta_w") c.w.beta_w = kv::to_double(e);
      else if (e.key == "beta_q") c.w.beta_q = kv::to_double(e);
      else if (e.key == "eta1") c.w.eta1 = kv::to_double(e);
      else if (e.key == "eta2") c.w.eta2 = kv::to_double(e);
      else if (e.key == "clip_eps") c.w.clip_eps = kv::to_double(e);
      else if (e.key == "entropy_coef") c.w.entropy_coef = kv::to_double(e);
      else if (e.key == "value_coef") c.w.value_coef = kv::to_double(e);
      else if (e.key == "gamma") c.w.gamma = kv::to_double(e);
      else if (e.key == "lambda") c.w.lambda = kv::to_double(e);
      else kv::fail(e, "unknown key");
    } else if (e.section == "training") {
      if (e.key == "lr") c.lr = kv::to_double(e);
      else if (e.key == "max_grad_norm") c.max_grad_norm = kv::to_double(e);
      else if (e.key == "epochs") c.epochs = kv::to_int(e);
      else if (e.key == "minibatch_steps") c.minibatch_steps = kv::to_int(e);
      else if (e.key == "pretrain_episodes") c.pretrain_episodes = kv::to_int(e);
      else kv::fail(e, "unknown key");
    } else if (e.section == "simulator") {
      if (e.key == "episode_seconds") c.episode_seconds = kv::to_int(e);
      else if (e.key == "control_interval_s") c.control_interval_s = kv::to_int(e);
      else if (e.key == "yellow_s") c.yellow_s = kv::to_int(e);
      else kv::fail(e, "unknown key");
    } else {
      kv::fail(e, "unknown section for");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

// Expands a run config into the trainer's per-seed settings.
inline TrainConfig make_train_config(const ExperimentConfig& c, std::uint64_t seed,
                                     std::string log_path, std::string checkpoint_path) {
  c.validate();
  TrainConfig t;
  t.episodes = c.episodes;
  t.control_steps = c.control_steps();
  t.checkpoint_every = c.checkpoint_every;
  t.epochs = c.epochs;
  t.minibatch_steps = c.minibatch_steps;
  t.pretrain_episodes = c.pretrain_episodes;
  t.parallel_envs = c.parallel_envs;
  t.lr = c.lr;
  t.max_grad_norm = c.max_grad_norm;
  t.seed = seed;
  t.variant = c.variant;
  t.strict_paper_mode = c.strict_paper_mode;
  t.w = c.w;
  t.log_path = std::move(log_path);
  t.checkpoint_path = std::move(checkpoint_path);
  return t;
}

}  // namespace hilight
