#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hilight/features.hpp"
#include "hilight/metapolicy.hpp"
#include "hilight/simulator.hpp"
#include "hilight/subpolicy.hpp"

namespace hilight {

// Loss and return coefficients. beta_* weight the two goal components, eta_1
// scales the ambition term in the high-level loss, eta_2 the alignment
// penalty in the low-level loss.
struct LossWeights {
  double beta_w = 0.5;
  double beta_q = 0.5;
  double eta1 = 0.1;
  double eta2 = 0.1;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 1.0;
  double gamma = 0.99;
  double lambda = 0.95;
};

// Per-intersection step reward; the speed score enters with opposite sign as
// the single "good" term.
inline double local_reward(const RewardTerms& t) { return -(t.ql + t.wt + t.dt + t.ps - t.ss); }

// Weighted shortfall of the realized aggregates against the goal, normalized
// space. The default pairs waiting time with g_w and queue length with g_q;
// `swapped` reproduces the crossed pairing kept behind a compatibility flag.
inline double goal_discrepancy(double w_obs, double q_obs, double g_w, double g_q,
                               const LossWeights& w, bool swapped = false) {
  if (swapped) return w.beta_q * (w_obs - g_q) + w.beta_w * (q_obs - g_w);
  return w.beta_w * (w_obs - g_w) + w.beta_q * (q_obs - g_q);
}

// Shared goal reward: positive when the network beat the goal.
inline double goal_reward(double w_obs, double q_obs, double g_w, double g_q,
                          const LossWeights& w, bool swapped = false) {
  return -goal_discrepancy(w_obs, q_obs, g_w, g_q, w, swapped);
}

inline double goal_reward(const GlobalAggregates& agg_norm, const SubGoal& goal,
                          const LossWeights& w, bool swapped = false) {
  return goal_reward(agg_norm.waiting_s, agg_norm.queue_veh, goal.g_w_norm, goal.g_q_norm, w,
                     swapped);
}

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> targets;  // advantage + value, the critic regression target
};

// Generalized advantage estimation over one reward sequence. `values` carries
// one extra trailing entry, the bootstrap value of the state after the last
// step.
inline GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
                     double gamma, double lambda) {
  const std::size_t t_len = rewards.size();
  if (values.size() != t_len + 1)
    throw std::invalid_argument("gae: need one more value than rewards");
  GaeResult out;
  out.advantages.resize(t_len);
  out.targets.resize(t_len);
  double acc = 0.0;
  for (std::size_t t = t_len; t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lambda * acc;
    out.advantages[t] = acc;
    out.targets[t] = acc + values[t];
  }
  return out;
}

// In-place shift/scale to mean 0, std 1 (epsilon-guarded against degenerate
// batches).
inline void normalize_advantages(Eigen::VectorXd& a) {
  if (a.size() == 0) return;
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  const double std = std::sqrt(var + 1e-8);
  a = (a.array() - mean) / std;
}

struct PpoBatch {
  std::vector<int> actions;
  Eigen::VectorXd logp_old;
  Eigen::VectorXd advantages;  // already normalized by the caller
  Eigen::VectorXd targets;
};

struct PpoLoss {
  double policy = 0.0;
  double value = 0.0;    // raw squared error, the coefficient applies in `total`
  double entropy = 0.0;
  double total = 0.0;
  int excluded = 0;      // samples dropped for a non-finite importance ratio
};

struct PpoGrads {
  nn::Mat dlogits;
  nn::Mat dvalue;
  PpoLoss loss;
};

// Clipped-surrogate actor-critic loss and its exact gradients with respect to
// the logits and value predictions. Samples with a non-finite ratio are
// excluded from every term and counted.
inline PpoGrads ppo_grads(const nn::Mat& logits, const nn::Mat& value, const PpoBatch& b,
                          const LossWeights& w) {
  const Eigen::Index n = logits.rows();
  if (value.rows() != n || static_cast<Eigen::Index>(b.actions.size()) != n ||
      b.logp_old.size() != n || b.advantages.size() != n || b.targets.size() != n)
    throw std::invalid_argument("ppo_grads: batch size mismatch");

  PpoGrads out;
  out.dlogits = nn::Mat::Zero(n, logits.cols());
  out.dvalue = nn::Mat::Zero(n, 1);

  const Eigen::VectorXd logp_new = action_log_probs(logits, b.actions);
  const Eigen::VectorXd entropies = policy_entropy(logits);

  // log-probabilities of every action, kept in log space so vanishing
  // probabilities stay finite
  Eigen::VectorXd lse(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    lse(i) = mx + std::log((logits.row(i).array() - mx).exp().sum());
  }
  const nn::Mat logp_all = logits.colwise() - lse;
  const nn::Mat probs = logp_all.array().exp().matrix();

  std::vector<bool> included(static_cast<std::size_t>(n));
  Eigen::VectorXd ratios(n);
  Eigen::Index n_eff = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    ratios(i) = std::exp(logp_new(i) - b.logp_old(i));
    included[static_cast<std::size_t>(i)] = std::isfinite(ratios(i));
    if (included[static_cast<std::size_t>(i)])
      ++n_eff;
    else
      ++out.loss.excluded;
  }
  if (n_eff == 0) return out;
  const double inv = 1.0 / static_cast<double>(n_eff);

  double policy_sum = 0.0, value_sum = 0.0, entropy_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!included[static_cast<std::size_t>(i)]) continue;
    const double adv = b.advantages(i);
    const double r = ratios(i);
    const double clipped = std::clamp(r, 1.0 - w.clip_eps, 1.0 + w.clip_eps);
    const double surr1 = r * adv;
    const double surr2 = clipped * adv;
    policy_sum += std::min(surr1, surr2);

    // gradient flows through the unclipped branch only while it is the active
    // minimum; the clipped branch is locally constant in the logits
    if (surr1 <= surr2) {
      const double dlogp = -adv * r * inv;
      out.dlogits.row(i) = dlogp * (-probs.row(i));
      out.dlogits(i, b.actions[static_cast<std::size_t>(i)]) += dlogp;
    }
    // entropy bonus: d(-c_e H)/dlogit_j = c_e p_j (log p_j + H)
    out.dlogits.row(i) +=
        (w.entropy_coef * inv) *
        (probs.row(i).array() * (logp_all.row(i).array() + entropies(i))).matrix();

    const double verr = value(i, 0) - b.targets(i);
    value_sum += verr * verr;
    out.dvalue(i, 0) = w.value_coef * 2.0 * verr * inv;
    entropy_sum += entropies(i);
  }
  out.loss.policy = -policy_sum * inv;
  out.loss.value = value_sum * inv;
  out.loss.entropy = entropy_sum * inv;
  out.loss.total =
      out.loss.policy - w.entropy_coef * out.loss.entropy + w.value_coef * out.loss.value;
  return out;
}

inline PpoLoss ppo_loss(const nn::Mat& logits, const nn::Mat& value, const PpoBatch& b,
                        const LossWeights& w) {
  return ppo_grads(logits, value, b, w).loss;
}

// High-level loss over aligned (goal, realized outcome) rows in normalized
// space: regression toward what actually happened plus an ambition term that
// rewards promising better outcomes than were achieved.
inline double meta_loss(const nn::Mat& goals_norm, const nn::Mat& outcomes_norm,
                        const LossWeights& w, bool swapped = false) {
  if (goals_norm.rows() != outcomes_norm.rows() || goals_norm.cols() != 2 ||
      outcomes_norm.cols() != 2)
    throw std::invalid_argument("meta_loss: need matching (B, 2) goal/outcome rows");
  if (goals_norm.rows() == 0) throw std::invalid_argument("meta_loss: empty batch");
  const double sq = (goals_norm - outcomes_norm).rowwise().squaredNorm().mean();
  double rg = 0.0;
  for (Eigen::Index i = 0; i < goals_norm.rows(); ++i)
    rg += goal_reward(outcomes_norm(i, 0), outcomes_norm(i, 1), goals_norm(i, 0), goals_norm(i, 1),
                      w, swapped);
  rg /= static_cast<double>(goals_norm.rows());
  return sq + w.eta1 * rg;
}

// Low-level loss: the actor-critic total plus the goal-alignment penalty. The
// penalty is a reported scalar, not a gradient path; the goal term reaches the
// actor through the rewards instead.
inline double sub_loss(const PpoLoss& ac, const nn::Mat& goals_norm, const nn::Mat& outcomes_norm,
                       const LossWeights& w, bool swapped = false) {
  if (goals_norm.rows() != outcomes_norm.rows() || goals_norm.cols() != 2 ||
      outcomes_norm.cols() != 2)
    throw std::invalid_argument("sub_loss: need matching (B, 2) goal/outcome rows");
  if (goals_norm.rows() == 0) throw std::invalid_argument("sub_loss: empty batch");
  double d = 0.0;
  for (Eigen::Index i = 0; i < goals_norm.rows(); ++i)
    d += goal_discrepancy(outcomes_norm(i, 0), outcomes_norm(i, 1), goals_norm(i, 0),
                          goals_norm(i, 1), w, swapped);
  d /= static_cast<double>(goals_norm.rows());
  return ac.total + w.eta2 * d;
}

// Component switches for controlled-removal runs.
struct AblationFlags {
  bool use_gac = true;         // neighbor attention in the low-level encoder
  bool use_global = true;      // global-feature columns in the fused input
  bool use_goal_terms = true;  // goal reward and both eta terms
  bool use_meta = true;        // run and train the high-level policy at all
};

inline AblationFlags ablation_flags(const std::string& variant) {
  if (variant == "full") return {};
  if (variant == "no_gac") return {.use_gac = false};
  if (variant == "no_global_feature") return {.use_global = false};
  if (variant == "no_subgoal") return {.use_goal_terms = false};
  if (variant == "no_meta")
    return {.use_global = false, .use_goal_terms = false, .use_meta = false};
  throw std::invalid_argument("unknown ablation variant: " + variant);
}

inline const char* kTrainLogHeader =
    "episode,seed,variant,mean_reward,att,adt,meta_loss,sub_loss,grad_norm";

struct TrainConfig {
  int episodes = 100;
  int control_steps = 240;   // control decisions per episode (15 s each)
  int checkpoint_every = 10;
  int epochs = 4;            // update passes over each rollout
  int minibatch_steps = 60;  // control steps per minibatch (all agents included)
  int pretrain_episodes = 0; // leading episodes that update only the high-level regression
  int parallel_envs = 1;     // rollouts collected per update iteration, frozen parameters
  double lr = 3e-4;
  double max_grad_norm = 10.0;
  std::uint64_t seed = 1;
  std::string variant = "full";
  bool strict_paper_mode = false;  // crossed goal pairing, kept for comparison runs
  LossWeights w;
  std::string log_path;         // CSV; empty disables file logging
  std::string checkpoint_path;  // single file, overwritten at each cadence point
};

// Everything recorded while driving one episode with frozen parameters.
struct Rollout {
  std::vector<nn::Mat> obs;                    // [T] (N, 66)
  std::vector<Eigen::VectorXd> global_feats;   // [T] (4)
  std::vector<std::vector<int>> actions;       // [T][N]
  std::vector<Eigen::VectorXd> logp_old;       // [T] (N)
  std::vector<Eigen::VectorXd> values;         // [T] (N)
  std::vector<Eigen::VectorXd> rewards;        // [T] (N), local + shared goal term
  std::vector<double> r_g;                     // [T] shared goal reward
  std::vector<std::vector<RewardTerms>> terms; // [T][N]
  std::vector<nn::Mat> snapshots;              // [T] (M, 4) regional states
  nn::Mat goals_norm;                          // (T, 2) as generated
  nn::Mat outcomes_norm;                       // (T, 2) realized one control step later
  Eigen::VectorXd bootstrap;                   // (N) value of the post-rollout state
  nn::Mat advantages;                          // (T, N)
  nn::Mat targets;                             // (T, N)
  double att = 0.0, adt = 0.0, mean_reward = 0.0;
};

struct EpisodeStats {
  int episode = 0;
  double mean_reward = 0.0, att = 0.0, adt = 0.0;
  double meta_loss = 0.0, sub_loss = 0.0, grad_norm = 0.0;
  bool finite = true;
};

struct EvalResult {
  double att = 0.0, adt = 0.0, mean_reward = 0.0;
};

// The last `kHistorySteps` snapshots ending at index t, zero-padded in front,
// newest last; mirrors the online history buffer exactly.
inline std::vector<nn::Mat> history_window(const std::vector<nn::Mat>& snapshots, int t,
                                           int num_regions) {
  std::vector<nn::Mat> win;
  win.reserve(static_cast<std::size_t>(kHistorySteps));
  for (int k = t - kHistorySteps + 1; k <= t; ++k)
    win.push_back(k < 0 ? nn::Mat::Zero(num_regions, kRegionalStateDim)
                        : snapshots[static_cast<std::size_t>(k)]);
  return win;
}

// One full episode under a fixed classical controller; returns (att, adt).
inline std::pair<double, double> run_controller_episode(const Network& net, const FlowSpec& flow,
                                                        int control_steps, std::uint64_t seed,
                                                        const std::string& controller) {
  if (controller != "ftc" && controller != "maxpressure")
    throw std::invalid_argument("unknown controller: " + controller);
  SimState st = init_sim_state(net, flow, control_steps * kControlIntervalS, seed);
  for (int t = 0; t < control_steps; ++t) {
    const std::vector<int> actions =
        controller == "ftc" ? ftc_controller(st) : max_pressure_controller(st);
    apply_actions(st, actions, &flow);
  }
  return {episode_att(st), episode_adt(st)};
}

// Joint optimization driver: rollout collection with frozen parameters, PPO
// updates for the low-level policy, regression-plus-ambition updates for the
// high-level one, CSV logging, checkpointing, and divergence rollback.
class Trainer {
 public:
  Trainer(const Network& net, const FlowSpec& flow, TrainConfig cfg)
      : net_(&net), flow_(flow), cfg_(std::move(cfg)), flags_(ablation_flags(cfg_.variant)) {
    if (cfg_.control_steps < 1) throw std::invalid_argument("Trainer: need >= 1 control step");
    if (cfg_.minibatch_steps < 1) throw std::invalid_argument("Trainer: minibatch_steps >= 1");
    if (cfg_.epochs < 1) throw std::invalid_argument("Trainer: epochs >= 1");
    if (cfg_.checkpoint_every < 1) throw std::invalid_argument("Trainer: checkpoint_every >= 1");
    if (cfg_.parallel_envs < 1) throw std::invalid_argument("Trainer: parallel_envs >= 1");
    Rng init_rng(mix_seed(cfg_.seed, kInitSalt));
    meta_.emplace(meta_ps_, net.num_regions(), init_rng);
    sub_.emplace(sub_ps_, init_rng);
    neighbors_ = neighbor_lists(net);
    lr_ = cfg_.lr;
  }

  const TrainConfig& config() const { return cfg_; }
  const AblationFlags& flags() const { return flags_; }
  int episode() const { return episode_; }
  double lr() const { return lr_; }
  bool lr_halved() const { return lr_halved_; }
  nn::ParameterSet& meta_params() { return meta_ps_; }
  nn::ParameterSet& sub_params() { return sub_ps_; }
  MetaPolicy& meta() { return *meta_; }
  SubPolicy& sub() { return *sub_; }

  // Drives one episode with the current parameters. `sample` switches between
  // the stochastic policy (training) and argmax (evaluation).
  Rollout collect_rollout(std::uint64_t sim_seed, std::uint64_t policy_seed, bool sample) {
    const int t_len = cfg_.control_steps;
    const int n = net_->num_intersections();
    const int m = net_->num_regions();
    SimState st = init_sim_state(*net_, flow_, t_len * kControlIntervalS, sim_seed);
    Rng act_rng(mix_seed(policy_seed, kActSalt));
    RunningMax wait_scale;
    RegionalHistory hist(m);

    Rollout ro;
    ro.goals_norm = nn::Mat::Zero(t_len, 2);
    ro.outcomes_norm = nn::Mat::Zero(t_len, 2);
    ro.obs.reserve(static_cast<std::size_t>(t_len));

    for (int t = 0; t < t_len; ++t) {
      nn::Mat obs = observe_all(st);
      Eigen::VectorXd fg = Eigen::VectorXd::Zero(kRegionalStateDim);
      double gwn = 0.0, gqn = 0.0;
      if (flags_.use_meta) {
        hist.push(regional_snapshot(st, wait_scale));
        const auto view = hist.view();
        ro.snapshots.push_back(view.back());
        const SubGoal goal = meta_->generate_subgoal(view);
        gwn = goal.g_w_norm;
        gqn = goal.g_q_norm;
        if (flags_.use_global) fg = meta_->global_feature(view);
      } else {
        ro.snapshots.push_back(nn::Mat::Zero(m, kRegionalStateDim));
      }
      ro.goals_norm(t, 0) = gwn;
      ro.goals_norm(t, 1) = gqn;

      const auto f =
          sub_->forward(obs, neighbors_, fg, false, nullptr, flags_.use_gac, flags_.use_global);
      const std::vector<int> actions =
          sample ? sample_actions(f.logits, act_rng) : argmax_actions(f.logits);
      ro.obs.push_back(std::move(obs));
      ro.global_feats.push_back(fg);
      ro.actions.push_back(actions);
      ro.logp_old.push_back(action_log_probs(f.logits, actions));
      ro.values.push_back(f.value.col(0));

      apply_actions(st, actions, &flow_);

      const GlobalAggregates agg = global_aggregates(st);
      double rg = 0.0;
      if (flags_.use_meta) {
        meta_->scale_w.update(agg.waiting_s);
        meta_->scale_q.update(agg.queue_veh);
        const double yw = meta_->scale_w.normalize(agg.waiting_s);
        const double yq = meta_->scale_q.normalize(agg.queue_veh);
        ro.outcomes_norm(t, 0) = yw;
        ro.outcomes_norm(t, 1) = yq;
        if (flags_.use_goal_terms)
          rg = goal_reward(yw, yq, gwn, gqn, cfg_.w, cfg_.strict_paper_mode);
      }
      ro.r_g.push_back(rg);

      Eigen::VectorXd rew(n);
      std::vector<RewardTerms> step_terms;
      step_terms.reserve(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const RewardTerms terms =
            reward_terms(st, net_->intersections[static_cast<std::size_t>(i)]);
        rew(i) = local_reward(terms) + rg;
        step_terms.push_back(terms);
      }
      ro.rewards.push_back(std::move(rew));
      ro.terms.push_back(std::move(step_terms));
    }

    // bootstrap value of the state after the final control step
    {
      const nn::Mat obs = observe_all(st);
      Eigen::VectorXd fg = Eigen::VectorXd::Zero(kRegionalStateDim);
      if (flags_.use_meta) {
        hist.push(regional_snapshot(st, wait_scale));
        if (flags_.use_global) fg = meta_->global_feature(hist.view());
      }
      const auto f =
          sub_->forward(obs, neighbors_, fg, false, nullptr, flags_.use_gac, flags_.use_global);
      ro.bootstrap = f.value.col(0);
    }

    ro.advantages.resize(t_len, n);
    ro.targets.resize(t_len, n);
    std::vector<double> rws(static_cast<std::size_t>(t_len));
    std::vector<double> vals(static_cast<std::size_t>(t_len) + 1);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < t_len; ++t) {
        rws[static_cast<std::size_t>(t)] = ro.rewards[static_cast<std::size_t>(t)](i);
        vals[static_cast<std::size_t>(t)] = ro.values[static_cast<std::size_t>(t)](i);
      }
      vals[static_cast<std::size_t>(t_len)] = ro.bootstrap(i);
      const GaeResult g = gae(rws, vals, cfg_.w.gamma, cfg_.w.lambda);
      for (int t = 0; t < t_len; ++t) {
        ro.advantages(t, i) = g.advantages[static_cast<std::size_t>(t)];
        ro.targets(t, i) = g.targets[static_cast<std::size_t>(t)];
      }
    }

    ro.att = episode_att(st);
    ro.adt = episode_adt(st);
    double sum = 0.0;
    for (const auto& r : ro.rewards) sum += r.sum();
    ro.mean_reward = sum / static_cast<double>(t_len * n);
    return ro;
  }

  // Minibatched updates over one rollout. During the pretraining phase only
  // the high-level regression runs (ambition term off, low-level untouched).
  EpisodeStats update(const Rollout& ro, int episode, bool pretrain) {
    return update(std::vector<const Rollout*>{&ro}, episode, pretrain);
  }

  EpisodeStats update(const std::vector<Rollout>& ros, int episode, bool pretrain) {
    std::vector<const Rollout*> ptrs;
    ptrs.reserve(ros.size());
    for (const Rollout& r : ros) ptrs.push_back(&r);
    return update(ptrs, episode, pretrain);
  }

  // One serialized update pass over the rollouts of all environment instances.
  // Minibatches draw (env, step) pairs from the combined pool.
  EpisodeStats update(const std::vector<const Rollout*>& ros, int episode, bool pretrain) {
    if (ros.empty()) throw std::invalid_argument("update: need >= 1 rollout");
    const int envs = static_cast<int>(ros.size());
    EpisodeStats s;
    double mr = 0.0, att = 0.0, adt = 0.0;
    for (const Rollout* r : ros) {
      mr += r->mean_reward;
      att += r->att;
      adt += r->adt;
    }
    s.mean_reward = mr / envs;
    s.att = att / envs;
    s.adt = adt / envs;
    const int t_len = cfg_.control_steps;
    const int n = net_->num_intersections();
    const int mb = std::min(cfg_.minibatch_steps, t_len);
    const int total = t_len * envs;
    Rng urng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(episode), kUpdateSalt));
    std::vector<double> norms;

    double sub_sum = 0.0;
    int sub_batches = 0;
    if (!pretrain) {
      std::vector<int> order(static_cast<std::size_t>(total));
      for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        shuffle(order, urng);
        for (int c = 0; c + mb <= total; c += mb) {
          const int rows = mb * n;
          nn::Mat obs_mb(rows, kObservationDim);
          nn::Mat fg_mb(rows, kRegionalStateDim);
          nn::Mat goals_mb(mb, 2), outcomes_mb(mb, 2);
          PpoBatch b;
          b.actions.resize(static_cast<std::size_t>(rows));
          b.logp_old.resize(rows);
          b.advantages.resize(rows);
          b.targets.resize(rows);
          std::vector<std::vector<int>> nb_mb(static_cast<std::size_t>(rows));
          for (int k = 0; k < mb; ++k) {
            const int id = order[static_cast<std::size_t>(c + k)];
            const Rollout& ro = *ros[static_cast<std::size_t>(id / t_len)];
            const int t = id % t_len;
            obs_mb.middleRows(k * n, n) = ro.obs[static_cast<std::size_t>(t)];
            fg_mb.middleRows(k * n, n) =
                ro.global_feats[static_cast<std::size_t>(t)].transpose().replicate(n, 1);
            goals_mb.row(k) = ro.goals_norm.row(t);
            outcomes_mb.row(k) = ro.outcomes_norm.row(t);
            for (int i = 0; i < n; ++i) {
              const int row = k * n + i;
              b.actions[static_cast<std::size_t>(row)] =
                  ro.actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
              b.logp_old(row) = ro.logp_old[static_cast<std::size_t>(t)](i);
              b.advantages(row) = ro.advantages(t, i);
              b.targets(row) = ro.targets(t, i);
              auto& nbs = nb_mb[static_cast<std::size_t>(row)];
              for (int j : neighbors_[static_cast<std::size_t>(i)]) nbs.push_back(k * n + j);
            }
          }
          normalize_advantages(b.advantages);

          const auto f = sub_->forward(obs_mb, nb_mb, fg_mb, true, &urng, flags_.use_gac,
                                       flags_.use_global);
          const PpoGrads pg = ppo_grads(f.logits, f.value, b, cfg_.w);
          if (pg.loss.excluded == rows) {
            // every ratio non-finite means the policy outputs themselves are
            // broken; treat like a non-finite loss
            s.finite = false;
            return s;
          }
          LossWeights w_eff = cfg_.w;
          w_eff.eta2 = flags_.use_goal_terms ? cfg_.w.eta2 : 0.0;
          const double total =
              sub_loss(pg.loss, goals_mb, outcomes_mb, w_eff, cfg_.strict_paper_mode);
          sub_sum += total;
          ++sub_batches;
          if (!std::isfinite(total)) {
            s.finite = false;
            return s;
          }
          sub_ps_.zero_grad();
          sub_->backward(pg.dlogits, pg.dvalue, nn::Mat::Zero(rows, f.latent.cols()));
          norms.push_back(sub_ps_.clip_global_norm(cfg_.max_grad_norm));
          if (!sub_ps_.adam_step(lr_)) {
            s.finite = false;
            return s;
          }
        }
      }
    }
    s.sub_loss = sub_batches > 0 ? sub_sum / sub_batches : 0.0;

    double meta_sum = 0.0;
    int meta_batches = 0;
    if (flags_.use_meta) {
      LossWeights w_eff = cfg_.w;
      w_eff.eta1 = (flags_.use_goal_terms && !pretrain) ? cfg_.w.eta1 : 0.0;
      std::vector<int> order(static_cast<std::size_t>(total));
      for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        shuffle(order, urng);
        for (int c = 0; c + mb <= total; c += mb) {
          std::vector<std::vector<nn::Mat>> histories;
          histories.reserve(static_cast<std::size_t>(mb));
          nn::Mat targets(mb, 2);
          for (int k = 0; k < mb; ++k) {
            const int id = order[static_cast<std::size_t>(c + k)];
            const Rollout& ro = *ros[static_cast<std::size_t>(id / t_len)];
            const int t = id % t_len;
            histories.push_back(history_window(ro.snapshots, t, net_->num_regions()));
            targets.row(k) = ro.outcomes_norm.row(t);
          }
          meta_ps_.zero_grad();
          const auto tr = meta_->forward_goals(histories);
          const double loss =
              meta_loss(tr.goals_norm, targets, w_eff, cfg_.strict_paper_mode);
          meta_sum += loss;
          ++meta_batches;
          if (!std::isfinite(loss)) {
            s.finite = false;
            return s;
          }
          // d(loss)/d(goals): regression pull toward the outcomes plus the
          // constant ambition push downward
          nn::Mat dgoals = 2.0 * (tr.goals_norm - targets) / static_cast<double>(mb);
          dgoals.col(0).array() += w_eff.eta1 * w_eff.beta_w / static_cast<double>(mb);
          dgoals.col(1).array() += w_eff.eta1 * w_eff.beta_q / static_cast<double>(mb);
          meta_->backward_goals(tr, dgoals);
          norms.push_back(meta_ps_.clip_global_norm(cfg_.max_grad_norm));
          if (!meta_ps_.adam_step(lr_)) {
            s.finite = false;
            return s;
          }
        }
      }
    }
    s.meta_loss = meta_batches > 0 ? meta_sum / meta_batches : 0.0;

    if (!norms.empty()) {
      double acc = 0.0;
      for (double v : norms) acc += v;
      s.grad_norm = acc / static_cast<double>(norms.size());
    }
    return s;
  }

  // Full training loop: per-episode rollout + update, CSV row per episode,
  // snapshot/checkpoint cadence, divergence rollback with one lr halving.
  std::vector<EpisodeStats> train() {
    std::ofstream log;
    if (!cfg_.log_path.empty()) {
      log.open(cfg_.log_path, resumed_ ? std::ios::app : std::ios::trunc);
      if (!log) throw std::runtime_error("cannot open training log: " + cfg_.log_path);
      if (!resumed_) log << kTrainLogHeader << '\n';
    }
    take_snapshot();
    if (!cfg_.checkpoint_path.empty()) save_checkpoint(cfg_.checkpoint_path);

    std::vector<EpisodeStats> out;
    while (episode_ < cfg_.episodes) {
      // Independent per-env streams; env 0 reproduces the single-env run.
      std::vector<Rollout> ros;
      ros.reserve(static_cast<std::size_t>(cfg_.parallel_envs));
      bool finite_rollouts = true;
      for (int e = 0; e < cfg_.parallel_envs; ++e) {
        const std::uint64_t eu = static_cast<std::uint64_t>(e);
        ros.push_back(collect_rollout(
            mix_seed(cfg_.seed, static_cast<std::uint64_t>(episode_), kSimSalt + eu),
            mix_seed(cfg_.seed, static_cast<std::uint64_t>(episode_), kActSalt + eu), true));
        finite_rollouts = finite_rollouts && std::isfinite(ros.back().mean_reward);
      }
      const bool pretrain = episode_ < cfg_.pretrain_episodes;
      EpisodeStats s = update(ros, episode_, pretrain);
      if (!s.finite || !finite_rollouts) {
        rollback();
        continue;
      }
      s.episode = episode_;
      if (log.is_open()) {
        write_log_row(log, s);
        log.flush();
      }
      out.push_back(s);
      ++episode_;
      if (episode_ % cfg_.checkpoint_every == 0 || episode_ == cfg_.episodes) {
        take_snapshot();
        if (!cfg_.checkpoint_path.empty()) save_checkpoint(cfg_.checkpoint_path);
      }
    }
    return out;
  }

  // Simulation seed of evaluation episode k; exposed so classical controllers
  // can be run on byte-identical traffic for like-for-like comparisons.
  static std::uint64_t eval_sim_seed(std::uint64_t eval_seed, int k) {
    return mix_seed(eval_seed, static_cast<std::uint64_t>(k), kEvalSalt);
  }

  // Deterministic greedy evaluation with frozen normalizers; parameters are
  // untouched.
  EvalResult evaluate(int episodes, std::uint64_t eval_seed) {
    if (episodes < 1) throw std::invalid_argument("evaluate: need >= 1 episode");
    const bool fw = meta_->scale_w.frozen, fq = meta_->scale_q.frozen;
    meta_->scale_w.frozen = true;
    meta_->scale_q.frozen = true;
    EvalResult res;
    for (int k = 0; k < episodes; ++k) {
      const std::uint64_t s = eval_sim_seed(eval_seed, k);
      const Rollout ro = collect_rollout(s, s, false);
      res.att += ro.att;
      res.adt += ro.adt;
      res.mean_reward += ro.mean_reward;
    }
    meta_->scale_w.frozen = fw;
    meta_->scale_q.frozen = fq;
    res.att /= episodes;
    res.adt /= episodes;
    res.mean_reward /= episodes;
    return res;
  }

  void write_log_row(std::ostream& os, const EpisodeStats& s) const {
    os << s.episode << ',' << cfg_.seed << ',' << cfg_.variant << ','
       << format_double(s.mean_reward) << ',' << format_double(s.att) << ','
       << format_double(s.adt) << ',' << format_double(s.meta_loss) << ','
       << format_double(s.sub_loss) << ',' << format_double(s.grad_norm) << '\n';
  }

  // Mutable training state, bit-exact: episode counter, lr schedule state,
  // goal normalizers, then both parameter blocks with optimizer moments.
  void save_state(std::ostream& os) const {
    nn::detail::write_u64(os, static_cast<std::uint64_t>(episode_));
    write_f64(os, lr_);
    write_u8(os, lr_halved_ ? 1 : 0);
    for (const RunningScale* sc : {&meta_->scale_w, &meta_->scale_q}) {
      write_f64(os, sc->value);
      write_u8(os, sc->initialized ? 1 : 0);
      write_u8(os, sc->frozen ? 1 : 0);
    }
    nn::save_params(os, meta_ps_);
    nn::save_params(os, sub_ps_);
  }

  void load_state(std::istream& is) {
    episode_ = static_cast<int>(nn::detail::read_u64(is));
    lr_ = read_f64(is);
    lr_halved_ = read_u8(is) != 0;
    for (RunningScale* sc : {&meta_->scale_w, &meta_->scale_q}) {
      sc->value = read_f64(is);
      sc->initialized = read_u8(is) != 0;
      sc->frozen = read_u8(is) != 0;
    }
    nn::load_params(is, meta_ps_);
    nn::load_params(is, sub_ps_);
  }

  void save_checkpoint(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    nn::detail::write_u64(os, kCheckpointMagic);
    nn::detail::write_u64(os, 1);  // format version
    nn::detail::write_u64(os, cfg_.seed);
    nn::detail::write_u64(os, cfg_.variant.size());
    os.write(cfg_.variant.data(), static_cast<std::streamsize>(cfg_.variant.size()));
    save_state(os);
    os.flush();
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
  }

  // Identity header of a checkpoint file, readable without a Trainer.
  struct CheckpointInfo {
    std::uint64_t seed = 0;
    std::string variant;
  };

  static CheckpointInfo checkpoint_info(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    return read_checkpoint_header(is, path);
  }

  void load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    const CheckpointInfo info = read_checkpoint_header(is, path);
    if (info.seed != cfg_.seed || info.variant != cfg_.variant)
      throw std::runtime_error("checkpoint seed/variant mismatch: " + path);
    load_state(is);
    resumed_ = true;
  }

 private:
  static constexpr std::uint64_t kCheckpointMagic = 0x48494c4754433031ull;
  static constexpr std::uint64_t kInitSalt = 0x494e4954ull;
  static constexpr std::uint64_t kSimSalt = 0x53494d45ull;
  static constexpr std::uint64_t kActSalt = 0x41435452ull;
  static constexpr std::uint64_t kUpdateSalt = 0x55504454ull;
  static constexpr std::uint64_t kEvalSalt = 0x4556414cull;

  static CheckpointInfo read_checkpoint_header(std::istream& is, const std::string& path) {
    if (nn::detail::read_u64(is) != kCheckpointMagic)
      throw std::runtime_error("not a trainer checkpoint: " + path);
    if (nn::detail::read_u64(is) != 1)
      throw std::runtime_error("unsupported checkpoint version: " + path);
    CheckpointInfo info;
    info.seed = nn::detail::read_u64(is);
    info.variant.assign(nn::detail::read_u64(is), '\0');
    is.read(info.variant.data(), static_cast<std::streamsize>(info.variant.size()));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return info;
  }

  static void shuffle(std::vector<int>& order, Rng& rng) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(i))]);
  }

  static void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static double read_f64(std::istream& is) {
    double v = 0.0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("checkpoint: truncated stream");
    return v;
  }
  static void write_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
  }
  static std::uint8_t read_u8(std::istream& is) {
    char c = 0;
    is.read(&c, 1);
    if (!is) throw std::runtime_error("checkpoint: truncated stream");
    return static_cast<std::uint8_t>(c);
  }

  void take_snapshot() {
    std::ostringstream os(std::ios::binary);
    save_state(os);
    snapshot_ = os.str();
  }

  // Divergence recovery: restore the last good state and retry with half the
  // learning rate; a second divergence aborts.
  void rollback() {
    if (snapshot_.empty()) throw std::runtime_error("non-finite loss before first snapshot");
    if (lr_halved_)
      throw std::runtime_error("training diverged again after halving the learning rate");
    std::istringstream is(snapshot_);
    load_state(is);
    lr_ *= 0.5;
    lr_halved_ = true;
  }

  const Network* net_;
  FlowSpec flow_;
  TrainConfig cfg_;
  AblationFlags flags_;
  std::vector<std::vector<int>> neighbors_;
  nn::ParameterSet meta_ps_, sub_ps_;
  std::optional<MetaPolicy> meta_;
  std::optional<SubPolicy> sub_;
  int episode_ = 0;
  double lr_ = 3e-4;
  bool lr_halved_ = false;
  bool resumed_ = false;
  std::string snapshot_;
};

}  // namespace hilight
