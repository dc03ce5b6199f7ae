#pragma once

#include <vector>

#include "hilight/nn/layers.hpp"

namespace hilight::nn {

// Graph attention with concatenation: per node, attention scores over its
// (at most 4) neighbors via a learned vector a in R^{2d}, softmax-normalized;
// output is self || alpha_1 h_j1 || ... || alpha_4 h_j4, zero-padded.
// Scores: e_ij = LeakyReLU(a^T [h_i || h_j]) = LeakyReLU(a_src.h_i + a_dst.h_j).
class Gac {
 public:
  static constexpr int kSlots = 4;

  Gac(ParameterSet& ps, const std::string& prefix, int dim, Rng& rng)
      : dim_(dim), a_(&ps.add(prefix + ".a", 1, 2 * dim)) {
    init_normal(a_->w, 1.0 / std::sqrt(2.0 * dim), rng);
  }

  int out_dim() const { return dim_ * (kSlots + 1); }

  // h: (N, dim); neighbors[i] lists node indices in their fixed network order.
  // With enabled=false the neighbor blocks are zero and a is untouched.
  Mat forward(const Mat& h, const std::vector<std::vector<int>>& neighbors, bool enabled = true) {
    const Eigen::Index n = h.rows();
    if (h.cols() != dim_) throw std::invalid_argument("Gac: bad input width");
    if (static_cast<Eigen::Index>(neighbors.size()) != n)
      throw std::invalid_argument("Gac: neighbor list size mismatch");
    for (const auto& nb : neighbors)
      if (static_cast<int>(nb.size()) > kSlots)
        throw std::invalid_argument("Gac: node degree exceeds " + std::to_string(kSlots));

    h_ = h;
    neighbors_ = &neighbors;
    enabled_ = enabled;
    Mat z = Mat::Zero(n, out_dim());
    z.leftCols(dim_) = h;
    if (!enabled) return z;

    const auto a_src = a_->w.row(0).head(dim_);
    const auto a_dst = a_->w.row(0).tail(dim_);
    src_score_ = h * a_src.transpose();  // (N, 1)
    dst_score_ = h * a_dst.transpose();
    pre_.assign(static_cast<std::size_t>(n), {});
    alpha_.assign(static_cast<std::size_t>(n), {});
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& nb = neighbors[static_cast<std::size_t>(i)];
      if (nb.empty()) continue;
      auto& pre = pre_[static_cast<std::size_t>(i)];
      auto& alpha = alpha_[static_cast<std::size_t>(i)];
      pre.resize(nb.size());
      alpha.resize(nb.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const double raw = src_score_(i, 0) + dst_score_(nb[k], 0);
        pre[k] = raw;
        const double e = raw > 0.0 ? raw : kLeakySlope * raw;
        alpha[k] = e;
        mx = std::max(mx, e);
      }
      double sum = 0.0;
      for (double& v : alpha) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (std::size_t k = 0; k < nb.size(); ++k) {
        alpha[k] /= sum;
        z.row(i).segment(dim_ * (1 + static_cast<Eigen::Index>(k)), dim_) = alpha[k] * h.row(nb[k]);
      }
    }
    return z;
  }

  Mat backward(const Mat& dz) {
    const Eigen::Index n = h_.rows();
    if (dz.rows() != n || dz.cols() != out_dim()) throw std::invalid_argument("Gac: bad grad shape");
    Mat dh = dz.leftCols(dim_);
    if (!enabled_) return dh;

    const auto a_src = a_->w.row(0).head(dim_);
    const auto a_dst = a_->w.row(0).tail(dim_);
    Vec ds = Vec::Zero(n);  // grad wrt src_score per node
    Vec dt = Vec::Zero(n);  // grad wrt dst_score per node
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& nb = (*neighbors_)[static_cast<std::size_t>(i)];
      if (nb.empty()) continue;
      const auto& pre = pre_[static_cast<std::size_t>(i)];
      const auto& alpha = alpha_[static_cast<std::size_t>(i)];
      std::vector<double> dalpha(nb.size());
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const auto block = dz.row(i).segment(dim_ * (1 + static_cast<Eigen::Index>(k)), dim_);
        dh.row(nb[k]) += alpha[k] * block;
        dalpha[k] = block.dot(h_.row(nb[k]));
      }
      double dot = 0.0;
      for (std::size_t k = 0; k < nb.size(); ++k) dot += alpha[k] * dalpha[k];
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const double de = alpha[k] * (dalpha[k] - dot);
        const double dpre = de * (pre[k] > 0.0 ? 1.0 : kLeakySlope);
        ds(i) += dpre;
        dt(nb[k]) += dpre;
      }
    }
    a_->g.row(0).head(dim_) += ds.transpose() * h_;
    a_->g.row(0).tail(dim_) += dt.transpose() * h_;
    dh += ds * a_src + dt * a_dst;
    return dh;
  }

  // attention weights of node i from the last forward (empty if isolated)
  const std::vector<double>& attention(int i) const { return alpha_.at(static_cast<std::size_t>(i)); }

 private:
  int dim_;
  Param* a_;
  Mat h_;
  const std::vector<std::vector<int>>* neighbors_ = nullptr;
  bool enabled_ = true;
  Mat src_score_, dst_score_;
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> alpha_;
};

}  // namespace hilight::nn
