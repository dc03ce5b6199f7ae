#pragma once

#include <vector>

#include "hilight/nn/layers.hpp"

namespace hilight::nn {

// Multi-layer LSTM over a (T, B, in) sequence given as T matrices of (B, in).
// Gate layout in the fused matrices is [input, forget, cell, output].
class Lstm {
 public:
  Lstm(ParameterSet& ps, const std::string& prefix, int input, int hidden, int layers, Rng& rng)
      : input_(input), hidden_(hidden), layers_(layers) {
    for (int l = 0; l < layers; ++l) {
      const int in_dim = l == 0 ? input : hidden;
      LayerParams lp;
      lp.wih = &ps.add(prefix + ".l" + std::to_string(l) + ".wih", in_dim, 4 * hidden);
      lp.whh = &ps.add(prefix + ".l" + std::to_string(l) + ".whh", hidden, 4 * hidden);
      lp.b = &ps.add(prefix + ".l" + std::to_string(l) + ".b", 1, 4 * hidden);
      const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
      init_uniform(lp.wih->w, bound, rng);
      init_uniform(lp.whh->w, bound, rng);
      params_.push_back(lp);
    }
  }

  int hidden() const { return hidden_; }
  int layers() const { return layers_; }

  // Returns the top layer's hidden state at every step.
  std::vector<Mat> forward(const std::vector<Mat>& x) {
    if (x.empty()) throw std::invalid_argument("Lstm: empty sequence");
    const Eigen::Index batch = x[0].rows();
    if (x[0].cols() != input_) throw std::invalid_argument("Lstm: bad input width");
    const std::size_t t_len = x.size();

    cache_.assign(static_cast<std::size_t>(layers_), std::vector<StepCache>(t_len));
    std::vector<Mat> below(x.begin(), x.end());
    for (int l = 0; l < layers_; ++l) {
      const LayerParams& lp = params_[static_cast<std::size_t>(l)];
      Mat h = Mat::Zero(batch, hidden_);
      Mat c = Mat::Zero(batch, hidden_);
      for (std::size_t t = 0; t < t_len; ++t) {
        StepCache& sc = cache_[static_cast<std::size_t>(l)][t];
        sc.x = below[t];
        sc.c_prev = c;
        sc.h_prev = h;
        Mat z = ((sc.x * lp.wih->w + h * lp.whh->w).rowwise() + lp.b->w.row(0)).eval();
        sc.i = sigmoid(z.middleCols(0, hidden_));
        sc.f = sigmoid(z.middleCols(hidden_, hidden_));
        sc.g = z.middleCols(2 * hidden_, hidden_).array().tanh().matrix();
        sc.o = sigmoid(z.middleCols(3 * hidden_, hidden_));
        c = sc.f.cwiseProduct(sc.c_prev) + sc.i.cwiseProduct(sc.g);
        sc.tanh_c = c.array().tanh().matrix();
        h = sc.o.cwiseProduct(sc.tanh_c);
        sc.h = h;
        below[t] = h;
      }
      final_h_.resize(static_cast<std::size_t>(layers_));
      final_c_.resize(static_cast<std::size_t>(layers_));
      final_h_[static_cast<std::size_t>(l)] = h;
      final_c_[static_cast<std::size_t>(l)] = c;
    }
    return below;
  }

  // dh_top: gradient w.r.t. the top layer's per-step outputs (zero rows are
  // fine for steps without loss). Returns gradient w.r.t. the input sequence.
  std::vector<Mat> backward(const std::vector<Mat>& dh_top) {
    const std::size_t t_len = dh_top.size();
    if (cache_.empty() || cache_[0].size() != t_len)
      throw std::logic_error("Lstm: backward without matching forward");
    std::vector<Mat> d_above(dh_top.begin(), dh_top.end());
    for (int l = layers_ - 1; l >= 0; --l) {
      const LayerParams& lp = params_[static_cast<std::size_t>(l)];
      const Eigen::Index batch = d_above[0].rows();
      Mat dh_rec = Mat::Zero(batch, hidden_);
      Mat dc_rec = Mat::Zero(batch, hidden_);
      std::vector<Mat> d_below(t_len);
      for (std::size_t ti = t_len; ti-- > 0;) {
        const StepCache& sc = cache_[static_cast<std::size_t>(l)][ti];
        const Mat dh = d_above[ti] + dh_rec;
        const Mat do_ = dh.cwiseProduct(sc.tanh_c);
        const Mat dc = dh.cwiseProduct(sc.o).cwiseProduct(
                           (1.0 - sc.tanh_c.array().square()).matrix()) +
                       dc_rec;
        const Mat di = dc.cwiseProduct(sc.g);
        const Mat df = dc.cwiseProduct(sc.c_prev);
        const Mat dg = dc.cwiseProduct(sc.i);
        dc_rec = dc.cwiseProduct(sc.f);

        Mat dz(batch, 4 * hidden_);
        dz.middleCols(0, hidden_) = di.cwiseProduct(sc.i).cwiseProduct((1.0 - sc.i.array()).matrix());
        dz.middleCols(hidden_, hidden_) =
            df.cwiseProduct(sc.f).cwiseProduct((1.0 - sc.f.array()).matrix());
        dz.middleCols(2 * hidden_, hidden_) = dg.cwiseProduct((1.0 - sc.g.array().square()).matrix());
        dz.middleCols(3 * hidden_, hidden_) =
            do_.cwiseProduct(sc.o).cwiseProduct((1.0 - sc.o.array()).matrix());

        lp.wih->g += sc.x.transpose() * dz;
        lp.whh->g += sc.h_prev.transpose() * dz;
        lp.b->g.row(0) += dz.colwise().sum();
        d_below[ti] = dz * lp.wih->w.transpose();
        dh_rec = dz * lp.whh->w.transpose();
      }
      d_above = std::move(d_below);
    }
    return d_above;
  }

  const Mat& final_hidden(int layer) const { return final_h_.at(static_cast<std::size_t>(layer)); }
  const Mat& final_cell(int layer) const { return final_c_.at(static_cast<std::size_t>(layer)); }

 private:
  static Mat sigmoid(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

  struct LayerParams {
    Param *wih, *whh, *b;
  };
  struct StepCache {
    Mat x, h_prev, c_prev, i, f, g, o, tanh_c, h;
  };

  int input_, hidden_, layers_;
  std::vector<LayerParams> params_;
  std::vector<std::vector<StepCache>> cache_;
  std::vector<Mat> final_h_, final_c_;
};

}  // namespace hilight::nn
