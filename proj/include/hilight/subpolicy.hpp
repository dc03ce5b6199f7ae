#pragma once

#include <vector>

#include "hilight/network.hpp"
#include "hilight/nn/gac.hpp"
#include "hilight/nn/layers.hpp"

namespace hilight {

// Neighbor index lists in the network's fixed distance-then-id order, the
// layout the GAC pads against.
inline std::vector<std::vector<int>> neighbor_lists(const Network& net) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(net.num_intersections()));
  for (const auto& it : net.intersections)
    out[static_cast<std::size_t>(it.id)].assign(it.neighbors.begin(), it.neighbors.end());
  return out;
}

// Decentralized controller shared by every intersection: local encoding, GAC
// neighbor aggregation, global-feature fusion, a dropout MLP trunk, an 8-way
// phase actor, and a two-branch critic (scalar value + 56-dim latent plan).
class SubPolicy {
 public:
  static constexpr int kObsDim = 66;
  static constexpr int kGlobalDim = 4;
  static constexpr double kDropoutRate = 0.1;

  SubPolicy(nn::ParameterSet& ps, Rng& rng)
      : encode_(ps, "sub.encode", kObsDim, kObsDim),
        gac_(ps, "sub.gac", kObsDim, rng),
        fc1_(ps, "sub.fc1", gac_.out_dim() + kGlobalDim, 256),
        fc2_(ps, "sub.fc2", 256, 128),
        fc3_(ps, "sub.fc3", 128, 114),
        actor1_(ps, "sub.actor1", 114, 57),
        actor2_(ps, "sub.actor2", 57, kNumPhases),
        critic1_(ps, "sub.critic1", 114, 57),
        critic2a_(ps, "sub.critic2a", 114, 57),
        critic2b_(ps, "sub.critic2b", 57, 56),
        value_(ps, "sub.value", 114, 1),
        drop1_(kDropoutRate),
        drop2_(kDropoutRate),
        drop3_(kDropoutRate) {
    encode_.init_orthogonal_gain(std::sqrt(2.0), rng);
    fc1_.init_orthogonal_gain(std::sqrt(2.0), rng);
    fc2_.init_orthogonal_gain(std::sqrt(2.0), rng);
    fc3_.init_orthogonal_gain(std::sqrt(2.0), rng);
    actor1_.init_orthogonal_gain(std::sqrt(2.0), rng);
    actor2_.init_orthogonal_gain(0.01, rng);
    critic1_.init_orthogonal_gain(std::sqrt(2.0), rng);
    critic2a_.init_orthogonal_gain(std::sqrt(2.0), rng);
    critic2b_.init_orthogonal_gain(0.01, rng);
    value_.init_orthogonal_gain(0.01, rng);
  }

  struct Forward {
    nn::Mat encoded;  // (N, 66)
    nn::Mat z;        // (N, 330)
    nn::Mat fused;    // (N, 334)
    nn::Mat trunk;    // (N, 114)
    nn::Mat logits;   // (N, 8)
    nn::Mat value;    // (N, 1)
    nn::Mat latent;   // (N, 56)
  };

  // One batched pass over N agent rows. Rows may stack several timesteps as
  // long as `neighbors` indexes within the stacked batch. F_g is an input,
  // never a gradient path: the high-level policy trains on its own loss.
  Forward forward(const nn::Mat& obs, const std::vector<std::vector<int>>& neighbors,
                  const Eigen::VectorXd& global_feature, bool training = false,
                  Rng* dropout_rng = nullptr, bool use_gac = true, bool use_global = true) {
    if (global_feature.size() != kGlobalDim)
      throw std::invalid_argument("SubPolicy: global feature width != 4");
    return forward(obs, neighbors,
                   nn::Mat(global_feature.transpose().replicate(obs.rows(), 1)), training,
                   dropout_rng, use_gac, use_global);
  }

  // Same pass with one global-feature row per agent row, for batches that mix
  // timesteps with different high-level states.
  Forward forward(const nn::Mat& obs, const std::vector<std::vector<int>>& neighbors,
                  const nn::Mat& global_rows, bool training = false, Rng* dropout_rng = nullptr,
                  bool use_gac = true, bool use_global = true) {
    if (obs.cols() != kObsDim) throw std::invalid_argument("SubPolicy: observation width != 66");
    if (global_rows.rows() != obs.rows() || global_rows.cols() != kGlobalDim)
      throw std::invalid_argument("SubPolicy: global feature rows must be (N, 4)");

    Forward f;
    f.encoded = act_encode_.forward(encode_.forward(obs));
    f.z = gac_.forward(f.encoded, neighbors, use_gac);
    f.fused.resize(obs.rows(), gac_.out_dim() + kGlobalDim);
    f.fused.leftCols(gac_.out_dim()) = f.z;
    if (use_global)
      f.fused.rightCols(kGlobalDim) = global_rows;
    else
      f.fused.rightCols(kGlobalDim).setZero();

    nn::Mat x = drop1_.forward(act1_.forward(fc1_.forward(f.fused)), training, dropout_rng);
    x = drop2_.forward(act2_.forward(fc2_.forward(x)), training, dropout_rng);
    f.trunk = drop3_.forward(act3_.forward(fc3_.forward(x)), training, dropout_rng);

    f.logits = actor2_.forward(act_actor_.forward(actor1_.forward(f.trunk)));

    c1_ = act_c1_.forward(critic1_.forward(f.trunk));
    c2_ = act_c2_.forward(critic2a_.forward(f.trunk));
    f.latent = critic2b_.forward(c2_);
    nn::Mat both(obs.rows(), 114);
    both.leftCols(57) = c1_;
    both.rightCols(57) = c2_;
    f.value = value_.forward(both);
    return f;
  }

  // Backpropagates the three output gradients of the latest forward. The
  // gradient into the observations is returned mostly for testing.
  nn::Mat backward(const nn::Mat& dlogits, const nn::Mat& dvalue, const nn::Mat& dlatent) {
    nn::Mat dtrunk = actor1_.backward(act_actor_.backward(actor2_.backward(dlogits)));

    nn::Mat dboth = value_.backward(dvalue);
    nn::Mat dc1 = dboth.leftCols(57);
    nn::Mat dc2 = dboth.rightCols(57).eval();
    dc2 += critic2b_.backward(dlatent);
    dtrunk += critic1_.backward(act_c1_.backward(dc1));
    dtrunk += critic2a_.backward(act_c2_.backward(dc2));

    nn::Mat dx = fc3_.backward(act3_.backward(drop3_.backward(dtrunk)));
    dx = fc2_.backward(act2_.backward(drop2_.backward(dx)));
    nn::Mat dfused = fc1_.backward(act1_.backward(drop1_.backward(dx)));

    nn::Mat dz = dfused.leftCols(gac_.out_dim());
    nn::Mat dencoded = gac_.backward(dz);
    return encode_.backward(act_encode_.backward(dencoded));
  }

  const nn::Gac& gac() const { return gac_; }

 private:
  nn::Linear encode_;
  nn::Gac gac_;
  nn::Linear fc1_, fc2_, fc3_;
  nn::Linear actor1_, actor2_;
  nn::Linear critic1_, critic2a_, critic2b_, value_;
  nn::LeakyRelu act_encode_;
  nn::Relu act1_, act2_, act3_, act_actor_, act_c1_, act_c2_;
  nn::Dropout drop1_, drop2_, drop3_;
  nn::Mat c1_, c2_;
};

// Categorical-policy helpers over rows of phase logits.

inline nn::Mat action_probabilities(const nn::Mat& logits) { return nn::softmax_rows(logits); }

inline std::vector<int> argmax_actions(const nn::Mat& logits) {
  std::vector<int> actions(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    logits.row(i).maxCoeff(&best);
    actions[static_cast<std::size_t>(i)] = best;
  }
  return actions;
}

inline std::vector<int> sample_actions(const nn::Mat& logits, Rng& rng) {
  const nn::Mat probs = nn::softmax_rows(logits);
  std::vector<int> actions(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < probs.rows(); ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    int chosen = static_cast<int>(probs.cols()) - 1;
    for (int a = 0; a < probs.cols(); ++a) {
      acc += probs(i, a);
      if (u < acc) {
        chosen = a;
        break;
      }
    }
    actions[static_cast<std::size_t>(i)] = chosen;
  }
  return actions;
}

inline Eigen::VectorXd action_log_probs(const nn::Mat& logits, const std::vector<int>& actions) {
  if (static_cast<int>(actions.size()) != logits.rows())
    throw std::invalid_argument("action_log_probs: one action per row required");
  Eigen::VectorXd out(logits.rows());
  for (int i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out(i) = logits(i, actions[static_cast<std::size_t>(i)]) - lse;
  }
  return out;
}

inline Eigen::VectorXd policy_entropy(const nn::Mat& logits) {
  const nn::Mat probs = nn::softmax_rows(logits);
  Eigen::VectorXd h(logits.rows());
  for (int i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (int a = 0; a < probs.cols(); ++a) {
      const double p = probs(i, a);
      if (p > 0.0) s -= p * std::log(p);
    }
    h(i) = s;
  }
  return h;
}

}  // namespace hilight
