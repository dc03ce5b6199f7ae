#pragma once

#include <vector>

#include "hilight/nn/layers.hpp"

namespace hilight::nn {

// Scaled dot-product self-attention over a sequence X (S, d) with learned
// Q/K/V/output projections; per-head dim = d / heads.
class MultiheadSelfAttention {
 public:
  MultiheadSelfAttention(ParameterSet& ps, const std::string& prefix, int d, int heads, Rng& rng)
      : d_(d),
        heads_(heads),
        hd_(d / heads),
        wq_(ps, prefix + ".wq", d, d),
        wk_(ps, prefix + ".wk", d, d),
        wv_(ps, prefix + ".wv", d, d),
        wo_(ps, prefix + ".wo", d, d) {
    if (d % heads != 0)
      throw std::invalid_argument("MultiheadSelfAttention: d must be divisible by heads");
    wq_.init_orthogonal_gain(1.0, rng);
    wk_.init_orthogonal_gain(1.0, rng);
    wv_.init_orthogonal_gain(1.0, rng);
    wo_.init_orthogonal_gain(1.0, rng);
  }

  Mat forward(const Mat& x) {
    if (x.cols() != d_) throw std::invalid_argument("MultiheadSelfAttention: bad input width");
    const Eigen::Index s = x.rows();
    q_ = wq_.forward(x);
    k_ = wk_.forward(x);
    v_ = wv_.forward(x);
    attn_.assign(static_cast<std::size_t>(heads_), Mat());
    Mat o(s, d_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd_));
    for (int h = 0; h < heads_; ++h) {
      const auto qh = q_.middleCols(h * hd_, hd_);
      const auto kh = k_.middleCols(h * hd_, hd_);
      const auto vh = v_.middleCols(h * hd_, hd_);
      attn_[static_cast<std::size_t>(h)] = softmax_rows(scale * (qh * kh.transpose()));
      o.middleCols(h * hd_, hd_) = attn_[static_cast<std::size_t>(h)] * vh;
    }
    return wo_.forward(o);
  }

  Mat backward(const Mat& dy) {
    const Mat dO = wo_.backward(dy);
    Mat dq(q_.rows(), d_), dk(q_.rows(), d_), dv(q_.rows(), d_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd_));
    for (int h = 0; h < heads_; ++h) {
      const Mat& a = attn_[static_cast<std::size_t>(h)];
      const auto qh = q_.middleCols(h * hd_, hd_);
      const auto kh = k_.middleCols(h * hd_, hd_);
      const auto vh = v_.middleCols(h * hd_, hd_);
      const auto dOh = dO.middleCols(h * hd_, hd_);
      const Mat dA = dOh * vh.transpose();
      const Mat dS = scale * softmax_backward_rows(a, dA);
      dq.middleCols(h * hd_, hd_) = dS * kh;
      dk.middleCols(h * hd_, hd_) = dS.transpose() * qh;
      dv.middleCols(h * hd_, hd_) = a.transpose() * dOh;
    }
    return wq_.backward(dq) + wk_.backward(dk) + wv_.backward(dv);
  }

  // row-stochastic attention matrices from the last forward, one per head
  const std::vector<Mat>& attention() const { return attn_; }

 private:
  int d_, heads_, hd_;
  Linear wq_, wk_, wv_, wo_;
  Mat q_, k_, v_;
  std::vector<Mat> attn_;
};

// Pre-norm-free encoder block: X + attn(X), then + FF(d -> ff_dim -> d, ReLU).
// Residual connections only; deliberately no layer normalization.
class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer(ParameterSet& ps, const std::string& prefix, int d, int heads, int ff_dim,
                          Rng& rng)
      : attn_(ps, prefix + ".attn", d, heads, rng),
        ff1_(ps, prefix + ".ff1", d, ff_dim),
        ff2_(ps, prefix + ".ff2", ff_dim, d) {
    ff1_.init_orthogonal_gain(std::sqrt(2.0), rng);
    ff2_.init_orthogonal_gain(1.0, rng);
  }

  Mat forward(const Mat& x) {
    const Mat h = x + attn_.forward(x);
    return h + ff2_.forward(relu_.forward(ff1_.forward(h)));
  }

  Mat backward(const Mat& dy) {
    const Mat dh = dy + ff1_.backward(relu_.backward(ff2_.backward(dy)));
    return dh + attn_.backward(dh);
  }

  const MultiheadSelfAttention& attention() const { return attn_; }

 private:
  MultiheadSelfAttention attn_;
  Linear ff1_, ff2_;
  Relu relu_;
};

class TransformerEncoder {
 public:
  TransformerEncoder(ParameterSet& ps, const std::string& prefix, int d, int heads, int ff_dim,
                     int layers, Rng& rng) {
    for (int l = 0; l < layers; ++l)
      layers_.emplace_back(ps, prefix + ".layer" + std::to_string(l), d, heads, ff_dim, rng);
  }

  Mat forward(const Mat& x) {
    Mat h = x;
    for (auto& layer : layers_) h = layer.forward(h);
    return h;
  }

  Mat backward(const Mat& dy) {
    Mat d = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = it->backward(d);
    return d;
  }

 private:
  std::deque<TransformerEncoderLayer> layers_;
};

}  // namespace hilight::nn
