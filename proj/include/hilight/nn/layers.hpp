#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hilight/nn/params.hpp"

namespace hilight::nn {

constexpr double kLeakySlope = 0.01;

// y = x W + b over row-vector batches: x (n, in) -> y (n, out).
class Linear {
 public:
  Linear(ParameterSet& ps, const std::string& prefix, int in, int out)
      : in_(in), out_(out), w_(&ps.add(prefix + ".w", in, out)), b_(&ps.add(prefix + ".b", 1, out)) {}

  void init_orthogonal_gain(double gain, Rng& rng) { init_orthogonal(w_->w, gain, rng); }
  void init_uniform_fan_in(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    init_uniform(w_->w, bound, rng);
    init_uniform(b_->w, bound, rng);
  }

  Mat forward(const Mat& x) {
    if (x.cols() != in_) throw std::invalid_argument("Linear " + w_->name + ": bad input width");
    x_ = x;
    return (x * w_->w).rowwise() + b_->w.row(0);
  }

  Mat backward(const Mat& dy) {
    if (dy.cols() != out_ || dy.rows() != x_.rows())
      throw std::invalid_argument("Linear " + w_->name + ": bad grad shape");
    w_->g += x_.transpose() * dy;
    b_->g.row(0) += dy.colwise().sum();
    return dy * w_->w.transpose();
  }

  Param& weight() { return *w_; }
  Param& bias() { return *b_; }
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  int in_, out_;
  Param *w_, *b_;
  Mat x_;
};

class Relu {
 public:
  Mat forward(const Mat& x) {
    x_ = x;
    return x.cwiseMax(0.0);
  }
  Mat backward(const Mat& dy) const {
    return dy.cwiseProduct((x_.array() > 0.0).cast<double>().matrix());
  }

 private:
  Mat x_;
};

class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = kLeakySlope) : slope_(slope) {}
  Mat forward(const Mat& x) {
    x_ = x;
    return x.unaryExpr([s = slope_](double v) { return v > 0.0 ? v : s * v; });
  }
  Mat backward(const Mat& dy) const {
    return dy.cwiseProduct(x_.unaryExpr([s = slope_](double v) { return v > 0.0 ? 1.0 : s; }));
  }

 private:
  double slope_;
  Mat x_;
};

// Inverted dropout: scales surviving units by 1/(1-rate) so evaluation mode is
// exactly the identity.
class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("Dropout: rate must be in [0,1)");
  }

  Mat forward(const Mat& x, bool training, Rng* rng) {
    if (!training || rate_ == 0.0) {
      training_ = false;
      return x;
    }
    if (rng == nullptr) throw std::invalid_argument("Dropout: training mode needs an rng");
    training_ = true;
    mask_.resize(x.rows(), x.cols());
    const double keep = 1.0 - rate_;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        mask_(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
    return x.cwiseProduct(mask_);
  }

  Mat backward(const Mat& dy) const { return training_ ? dy.cwiseProduct(mask_).eval() : dy; }

 private:
  double rate_;
  bool training_ = false;
  Mat mask_;
};

inline Mat softmax_rows(const Mat& x) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    Eigen::RowVectorXd e = (x.row(r).array() - mx).exp();
    y.row(r) = e / e.sum();
  }
  return y;
}

// d(softmax)/dx given the softmax output y and upstream dy, applied row-wise.
inline Mat softmax_backward_rows(const Mat& y, const Mat& dy) {
  Mat dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double dot = y.row(r).dot(dy.row(r));
    dx.row(r) = y.row(r).cwiseProduct(dy.row(r) - Eigen::RowVectorXd::Constant(y.cols(), dot));
  }
  return dx;
}

// PE(pos, 2i) = sin(pos / tau^(2i/d)), PE(pos, 2i+1) = cos(pos / tau^(2i/d)).
inline Vec positional_encoding(int pos, int d_model, double tau = 10000.0) {
  if (d_model <= 0 || d_model % 2 != 0)
    throw std::invalid_argument("positional_encoding: d_model must be positive and even");
  if (!(tau > 0.0)) throw std::invalid_argument("positional_encoding: tau must be > 0");
  Vec pe(d_model);
  for (int i = 0; i < d_model / 2; ++i) {
    const double angle =
        static_cast<double>(pos) / std::pow(tau, (2.0 * i) / static_cast<double>(d_model));
    pe(2 * i) = std::sin(angle);
    pe(2 * i + 1) = std::cos(angle);
  }
  return pe;
}

inline Mat positional_encoding_matrix(int positions, int d_model, double tau = 10000.0) {
  Mat pe(positions, d_model);
  for (int p = 0; p < positions; ++p) pe.row(p) = positional_encoding(p, d_model, tau).transpose();
  return pe;
}

}  // namespace hilight::nn
