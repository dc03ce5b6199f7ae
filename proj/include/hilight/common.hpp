#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hilight {

// splitmix64, used to derive independent stream seeds from one base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(a ^ mix_seed(b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b) ^ mix_seed(c));
}

// Deterministic RNG. std:: distributions are implementation-defined, so the
// few draws we need are implemented directly on top of an mt19937_64-style
// engine to keep traces reproducible across toolchains.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  // number of raw engine outputs consumed; part of the determinism digest
  std::uint64_t draws() const { return draws_; }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    return next_u64() % n;
  }

  // standard normal via Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Poisson count, Knuth for small lambda (arrival rates here are << 1)
  int poisson(double lambda) {
    if (lambda < 0) throw std::invalid_argument("Rng::poisson: lambda must be >= 0");
    if (lambda == 0) return 0;
    double l = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > l);
    return k - 1;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  struct Engine {  // mt19937_64-compatible output without <random> distributions
    explicit Engine(std::uint64_t seed) { reseed(seed); }
    void reseed(std::uint64_t seed) {
      state_[0] = seed;
      for (int i = 1; i < kN; ++i)
        state_[i] = 6364136223846793005ULL * (state_[i - 1] ^ (state_[i - 1] >> 62)) + static_cast<std::uint64_t>(i);
      index_ = kN;
    }
    std::uint64_t operator()() {
      if (index_ >= kN) twist();
      std::uint64_t x = state_[index_++];
      x ^= (x >> 29) & 0x5555555555555555ULL;
      x ^= (x << 17) & 0x71d67fffeda60000ULL;
      x ^= (x << 37) & 0xfff7eee000000000ULL;
      x ^= x >> 43;
      return x;
    }
    void twist() {
      constexpr std::uint64_t kLo = 0x7fffffffULL, kHi = ~kLo;
      for (int i = 0; i < kN; ++i) {
        std::uint64_t x = (state_[i] & kHi) | (state_[(i + 1) % kN] & kLo);
        std::uint64_t y = x >> 1;
        if (x & 1) y ^= 0xb5026f5aa96619e9ULL;
        state_[i] = state_[(i + 156) % kN] ^ y;
      }
      index_ = 0;
    }
    static constexpr int kN = 312;
    std::uint64_t state_[kN];
    int index_;
  };

  Engine engine_;
  std::uint64_t draws_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Canonical float formatting for config/CSV round-trips (shortest exact form).
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = std::strtod(buf, nullptr);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char s[64];
      std::snprintf(s, sizeof(s), "%.*g", prec, v);
      if (std::strtod(s, nullptr) == v) return s;
    }
  }
  return buf;
}

}  // namespace hilight
