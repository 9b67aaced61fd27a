// SPDX-License-Identifier: Apache-2.0
//
// Counter-based 64-bit random generator and the sampling routines used by
// the toy event generator. The core is the SplitMix64 finalizer applied to
// key + i*GAMMA for i = 1, 2, ...; a stream is fully determined by its key,
// and independent sub-streams are derived by hashing path words into the
// key. This keeps every dataset reproducible from (global seed, indices)
// no matter how work is scheduled.

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace domainshift {

class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static Rng from_seed(std::uint64_t seed) { return Rng(mix64(seed + kGamma)); }

  // New stream keyed by (this stream, path words); does not consume draws.
  Rng derive(std::initializer_list<std::uint64_t> path) const {
    std::uint64_t h = key_;
    for (std::uint64_t w : path) h = mix64(h + kGamma + w);
    return Rng(h);
  }
  Rng derive(std::uint64_t a) const { return derive({a}); }
  Rng derive(std::uint64_t a, std::uint64_t b) const { return derive({a, b}); }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGamma); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }
  double sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

  // Box-Muller, cosine branch only; two uniforms per draw.
  double normal(double mu = 0.0, double sigma = 1.0) {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * kPi * u2);
  }

  double truncated_normal(double mu, double sigma, double lo, double hi) {
    for (;;) {
      const double x = normal(mu, sigma);
      if (x > lo && x < hi) return x;
    }
  }

  double exponential(double mean) {
    return -mean * std::log(1.0 - uniform());
  }

  // Knuth product method; fine for the lambdas used here (< ~100).
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Marsaglia-Tsang; shape < 1 boosted through gamma(shape + 1).
  double gamma_dist(double shape, double scale) {
    if (shape <= 0.0 || scale <= 0.0)
      throw std::invalid_argument("gamma_dist: shape and scale must be > 0");
    if (shape < 1.0) {
      const double u = 1.0 - uniform();
      return gamma_dist(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
        return d * v * scale;
    }
  }

  // Symmetric Dirichlet(alpha) on n entries. The last entry is the residual
  // 1 - sum(previous), so a left-to-right sum of the result is exactly 1.
  std::vector<double> dirichlet(double alpha, std::size_t n) {
    if (n == 0) throw std::invalid_argument("dirichlet: n must be >= 1");
    if (n == 1) return {1.0};
    std::vector<double> g(n);
    double total = 0.0;
    for (auto& v : g) {
      v = gamma_dist(alpha, 1.0);
      total += v;
    }
    std::vector<double> f(n);
    double prefix = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      f[i] = g[i] / total;
      prefix += f[i];
    }
    f[n - 1] = 1.0 - prefix;
    if (f[n - 1] < 0.0) f[n - 1] = 0.0;
    return f;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr double kPi = 3.14159265358979323846;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace domainshift
