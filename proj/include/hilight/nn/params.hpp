#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "hilight/common.hpp"

namespace hilight::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// One learnable tensor plus its gradient accumulator and Adam moments.
struct Param {
  std::string name;
  Mat w, g, m, v;
};

inline void init_normal(Mat& w, double stddev, Rng& rng) {
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = stddev * rng.normal();
}

inline void init_uniform(Mat& w, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = bound * (2.0 * rng.uniform() - 1.0);
}

// Orthogonal rows/columns scaled by gain; sign-fixed so the result is a
// deterministic function of the rng stream.
inline void init_orthogonal(Mat& w, double gain, Rng& rng) {
  const bool tall = w.rows() >= w.cols();
  Mat n(tall ? w.rows() : w.cols(), tall ? w.cols() : w.rows());
  for (Eigen::Index c = 0; c < n.cols(); ++c)
    for (Eigen::Index r = 0; r < n.rows(); ++r) n(r, c) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(n);
  Mat q = qr.householderQ() * Mat::Identity(n.rows(), n.cols());
  Mat r = qr.matrixQR().topRows(n.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < q.cols(); ++c)
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  w = gain * (tall ? q : Mat(q.transpose()));
}

class ParameterSet {
 public:
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    params_.emplace_back();
    Param& p = params_.back();
    p.name = name;
    p.w = Mat::Zero(rows, cols);
    p.g = Mat::Zero(rows, cols);
    p.m = Mat::Zero(rows, cols);
    p.v = Mat::Zero(rows, cols);
    by_name_[name] = &p;
    return p;
  }

  Param& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return *it->second;
  }

  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.w.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.g.setZero();
  }

  double grad_norm() const {
    double sq = 0.0;
    for (const auto& p : params_) sq += p.g.squaredNorm();
    return std::sqrt(sq);
  }

  bool grads_finite() const {
    for (const auto& p : params_)
      if (!p.g.allFinite()) return false;
    return true;
  }

  // Scales all gradients so their joint norm is at most max_norm. Returns the
  // pre-clip norm.
  double clip_global_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm > max_norm && norm > 0.0) {
      const double scale = max_norm / norm;
      for (auto& p : params_) p.g *= scale;
    }
    return norm;
  }

  // Standard Adam with bias correction. Returns false (and changes nothing)
  // when any gradient is non-finite.
  bool adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (!grads_finite()) return false;
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& p : params_) {
      p.m = beta1 * p.m + (1.0 - beta1) * p.g;
      p.v = beta2 * p.v + (1.0 - beta2) * p.g.cwiseProduct(p.g);
      const Mat mhat = p.m / bc1;
      const Mat vhat = p.v / bc2;
      p.w -= lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(p.w.rows(), p.w.cols(), eps));
    }
    return true;
  }

 private:
  std::deque<Param> params_;  // deque: Param addresses stay stable as layers register
  std::unordered_map<std::string, Param*> by_name_;
  std::int64_t step_ = 0;
};

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return v;
}
inline void write_mat(std::ostream& os, const Mat& m) {
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}
inline void read_mat(std::istream& is, Mat& m) {
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
}

}  // namespace detail

// Binary, bit-exact parameter block: values plus optimizer moments and the
// step counter. Loading requires the same registered names and shapes.
inline void save_params(std::ostream& os, const ParameterSet& ps) {
  detail::write_u64(os, ps.size());
  for (const auto& p : ps.all()) {
    detail::write_u64(os, p.name.size());
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_u64(os, static_cast<std::uint64_t>(p.w.rows()));
    detail::write_u64(os, static_cast<std::uint64_t>(p.w.cols()));
    detail::write_mat(os, p.w);
    detail::write_mat(os, p.m);
    detail::write_mat(os, p.v);
  }
  detail::write_u64(os, static_cast<std::uint64_t>(ps.step()));
}

inline void load_params(std::istream& is, ParameterSet& ps) {
  const std::uint64_t count = detail::read_u64(is);
  if (count != ps.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (auto& p : ps.all()) {
    const std::uint64_t name_len = detail::read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is || name != p.name) throw std::runtime_error("checkpoint: parameter name mismatch");
    const auto rows = static_cast<Eigen::Index>(detail::read_u64(is));
    const auto cols = static_cast<Eigen::Index>(detail::read_u64(is));
    if (rows != p.w.rows() || cols != p.w.cols())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    detail::read_mat(is, p.w);
    detail::read_mat(is, p.m);
    detail::read_mat(is, p.v);
  }
  ps.set_step(static_cast<std::int64_t>(detail::read_u64(is)));
}

}  // namespace hilight::nn
