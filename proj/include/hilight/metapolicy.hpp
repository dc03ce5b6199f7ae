#pragma once

#include <utility>
#include <vector>

#include "hilight/features.hpp"
#include "hilight/nn/attention.hpp"
#include "hilight/nn/layers.hpp"
#include "hilight/nn/lstm.hpp"

namespace hilight {

// Exponential moving scale for the unbounded global aggregates; goals are
// regressed in units of this scale so the targets stay near 1.
struct RunningScale {
  double value = 1.0;
  bool initialized = false;
  bool frozen = false;
  static constexpr double kDecay = 0.99;

  void update(double x) {
    if (frozen) return;
    const double ax = std::max(std::abs(x), 1e-8);
    if (!initialized) {
      value = ax;
      initialized = true;
    } else {
      value = kDecay * value + (1.0 - kDecay) * ax;
    }
  }
  double normalize(double x) const { return x / value; }
  double denormalize(double g) const { return g * value; }
};

struct SubGoal {
  Eigen::VectorXd g;       // goal representation, length 16
  double g_w = 0.0;        // waiting-time target, seconds
  double g_q = 0.0;        // queue-length target, vehicles
  double g_w_norm = 0.0;   // the same targets in running-scale units
  double g_q_norm = 0.0;
};

namespace detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// High-level policy: per-step Transformer over [token; regions] with sinusoidal
// positions, an LSTM over the 20-step region-embedding sequence, and a goal
// head decoding nonnegative (G_w, G_q) targets.
class MetaPolicy {
 public:
  MetaPolicy(nn::ParameterSet& ps, int num_regions, Rng& rng, int d_model = 4, int heads = 2,
             int ff_dim = 165, int encoder_layers = 3, int lstm_hidden = 256, int lstm_layers = 4,
             int goal_dim = 16)
      : ps_(&ps),
        m_(num_regions),
        d_(d_model),
        goal_dim_(goal_dim),
        encoder_(ps, "meta.enc", d_model, heads, ff_dim, encoder_layers, rng),
        lstm_(ps, "meta.lstm", num_regions * d_model, lstm_hidden, lstm_layers, rng),
        proj_(ps, "meta.proj", lstm_hidden, goal_dim),
        head_(ps, "meta.head", goal_dim, 2),
        token_(&ps.add("meta.token", 1, d_model)) {
    if (num_regions < 1) throw std::invalid_argument("MetaPolicy: need >= 1 region");
    proj_.init_orthogonal_gain(1.0, rng);
    head_.init_orthogonal_gain(0.01, rng);
    pe_ = nn::positional_encoding_matrix(m_ + 1, d_, 10000.0);
  }

  int num_regions() const { return m_; }
  int goal_dim() const { return goal_dim_; }

  // One snapshot (M, d) -> (token embedding [d], region embeddings (M, d)).
  std::pair<Eigen::VectorXd, nn::Mat> encode_timestep(const nn::Mat& snapshot) {
    nn::Mat e = encoder_.forward(with_token(snapshot));
    return {e.row(0).transpose(), e.bottomRows(m_)};
  }

  // Global feature F_g: the token embedding of the newest snapshot.
  Eigen::VectorXd global_feature(const std::vector<nn::Mat>& history) {
    if (history.empty()) throw std::invalid_argument("global_feature: empty history");
    return encode_timestep(history.back()).first;
  }

  // Cached activations of one batched goal pass; consumed by backward_goals.
  struct Trace {
    std::vector<std::vector<nn::Mat>> x_pos;  // [sample][step] encoder input (M+1, d)
    std::vector<nn::Mat> lstm_in;             // [step] (B, M*d)
    nn::Mat g;                                // (B, goal_dim)
    nn::Mat head_pre;                         // (B, 2) pre-nonlinearity
    nn::Mat goals_norm;                       // (B, 2) = softplus(head_pre)
    int steps = 0;
  };

  // Scores a batch of histories (each a sequence of (M, d) snapshots) into
  // normalized goal pairs; all intermediate state is cached for the backward.
  Trace forward_goals(const std::vector<std::vector<nn::Mat>>& histories) {
    if (histories.empty()) throw std::invalid_argument("forward_goals: empty batch");
    const int batch = static_cast<int>(histories.size());
    const int steps = static_cast<int>(histories.front().size());
    if (steps < 1) throw std::invalid_argument("forward_goals: empty history");

    Trace tr;
    tr.steps = steps;
    tr.x_pos.resize(static_cast<std::size_t>(batch));
    tr.lstm_in.assign(static_cast<std::size_t>(steps), nn::Mat::Zero(batch, m_ * d_));
    for (int s = 0; s < batch; ++s) {
      const auto& hist = histories[static_cast<std::size_t>(s)];
      if (static_cast<int>(hist.size()) != steps)
        throw std::invalid_argument("forward_goals: ragged history batch");
      auto& cached = tr.x_pos[static_cast<std::size_t>(s)];
      cached.reserve(static_cast<std::size_t>(steps));
      for (int t = 0; t < steps; ++t) {
        cached.push_back(with_token(hist[static_cast<std::size_t>(t)]));
        nn::Mat e = encoder_.forward(cached.back());
        for (int r = 0; r < m_; ++r)
          tr.lstm_in[static_cast<std::size_t>(t)].block(s, r * d_, 1, d_) = e.row(r + 1);
      }
    }

    const auto seq = lstm_.forward(tr.lstm_in);
    tr.g = proj_.forward(seq.back());
    tr.head_pre = head_.forward(tr.g);
    tr.goals_norm = tr.head_pre.unaryExpr([](double x) { return detail::softplus(x); });
    return tr;
  }

  // Backpropagates d(loss)/d(goals_norm) into every meta parameter. The
  // encoder is re-run per (sample, step) against the cached inputs because its
  // internal cache holds only the most recent forward.
  void backward_goals(const Trace& tr, const nn::Mat& dgoals_norm) {
    const int batch = static_cast<int>(tr.x_pos.size());
    nn::Mat dhead_pre =
        dgoals_norm.cwiseProduct(tr.head_pre.unaryExpr([](double x) { return detail::sigmoid(x); }));
    nn::Mat dg = head_.backward(dhead_pre);
    nn::Mat dh_last = proj_.backward(dg);

    std::vector<nn::Mat> dh(static_cast<std::size_t>(tr.steps),
                            nn::Mat::Zero(batch, dh_last.cols()));
    dh.back() = dh_last;
    const auto dx = lstm_.backward(dh);

    for (int s = 0; s < batch; ++s) {
      for (int t = 0; t < tr.steps; ++t) {
        nn::Mat de = nn::Mat::Zero(m_ + 1, d_);
        for (int r = 0; r < m_; ++r)
          de.row(r + 1) = dx[static_cast<std::size_t>(t)].block(s, r * d_, 1, d_);
        encoder_.forward(tr.x_pos[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)]);
        nn::Mat dxin = encoder_.backward(de);
        token_->g += dxin.row(0);
      }
    }
  }

  // Decodes the goal for one history with the current running scales.
  SubGoal generate_subgoal(const std::vector<nn::Mat>& history) {
    Trace tr = forward_goals({history});
    SubGoal goal;
    goal.g = tr.g.row(0).transpose();
    goal.g_w_norm = tr.goals_norm(0, 0);
    goal.g_q_norm = tr.goals_norm(0, 1);
    goal.g_w = scale_w.denormalize(goal.g_w_norm);
    goal.g_q = scale_q.denormalize(goal.g_q_norm);
    return goal;
  }

  // One regression step toward observed aggregates (normalized space); the
  // ambition term is deliberately absent here. Returns the batch loss.
  double pretrain_step(const std::vector<std::vector<nn::Mat>>& histories,
                       const std::vector<GlobalAggregates>& observed, double lr = 3e-4) {
    if (histories.size() != observed.size())
      throw std::invalid_argument("pretrain_step: history/outcome count mismatch");
    ps_->zero_grad();
    Trace tr = forward_goals(histories);
    const int batch = static_cast<int>(histories.size());

    nn::Mat targets(batch, 2);
    for (int s = 0; s < batch; ++s) {
      targets(s, 0) = scale_w.normalize(observed[static_cast<std::size_t>(s)].waiting_s);
      targets(s, 1) = scale_q.normalize(observed[static_cast<std::size_t>(s)].queue_veh);
    }
    const nn::Mat err = tr.goals_norm - targets;
    const double loss = err.array().square().rowwise().sum().mean();
    if (!std::isfinite(loss)) return loss;  // caller decides; no step taken

    backward_goals(tr, 2.0 * err / static_cast<double>(batch));
    ps_->clip_global_norm(10.0);
    ps_->adam_step(lr);
    return loss;
  }

  RunningScale scale_w, scale_q;

 private:
  nn::Mat with_token(const nn::Mat& snapshot) const {
    if (snapshot.rows() != m_ || snapshot.cols() != d_)
      throw std::invalid_argument("MetaPolicy: snapshot shape mismatch");
    nn::Mat x(m_ + 1, d_);
    x.row(0) = token_->w.row(0);
    x.bottomRows(m_) = snapshot;
    return x + pe_;
  }

  nn::ParameterSet* ps_;
  int m_, d_, goal_dim_;
  nn::TransformerEncoder encoder_;
  nn::Lstm lstm_;
  nn::Linear proj_;
  nn::Linear head_;
  nn::Param* token_;
  nn::Mat pe_;
};

}  // namespace hilight
