#pragma once

// Reference implementations used to check the library from the outside.
// They are deliberately naive and share no code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ressl/datagen.hpp"
#include "ressl/learner.hpp"

namespace oracle {

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
};

inline double sq_residual(const std::vector<double>& xs, const std::vector<double>& ys, double s, double b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (s * xs[i] + b);
    sum += r * r;
  }
  return sum;
}

// Grid search over (s, b) in [-5, 5]^2 on a 1e-3 lattice. For each slope the
// best intercept is located by integer ternary search (the objective is
// convex in b); slopes are scanned at 0.1 and then at 1e-3 around the best
// coarse slope.
inline Line brute_force_ols(const std::vector<double>& xs, const std::vector<double>& ys) {
  constexpr long kLo = -5000, kHi = 5000;  // lattice indices, step 1e-3
  auto best_b = [&](double s, double& out_err) {
    long lo = kLo, hi = kHi;
    while (hi - lo > 2) {
      const long m1 = lo + (hi - lo) / 3;
      const long m2 = hi - (hi - lo) / 3;
      if (sq_residual(xs, ys, s, m1 * 1e-3) <= sq_residual(xs, ys, s, m2 * 1e-3)) hi = m2;
      else lo = m1;
    }
    long arg = lo;
    out_err = sq_residual(xs, ys, s, lo * 1e-3);
    for (long k = lo + 1; k <= hi; ++k) {
      const double e = sq_residual(xs, ys, s, k * 1e-3);
      if (e < out_err) {
        out_err = e;
        arg = k;
      }
    }
    return arg * 1e-3;
  };
  Line best;
  double best_err = INFINITY;
  auto scan = [&](long from, long to, long stride) {
    for (long k = std::max(from, kLo); k <= std::min(to, kHi); k += stride) {
      double err = 0.0;
      const double s = k * 1e-3;
      const double b = best_b(s, err);
      if (err < best_err) {
        best_err = err;
        best = {s, b};
      }
    }
  };
  scan(kLo, kHi, 100);
  const long centre = std::lround(best.slope * 1e3);
  scan(centre - 200, centre + 200, 1);
  return best;
}

// counts[k] = floor(n_max * c_ib^(k / (k_u - 1))) in extended precision.
inline std::vector<std::size_t> imbalance(double c_ib, std::size_t k_u, std::size_t n_max) {
  if (k_u == 1) return {n_max};
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < k_u; ++k) {
    const long double e = static_cast<long double>(k) / static_cast<long double>(k_u - 1);
    const long double v = static_cast<long double>(n_max) * std::exp(e * std::log(static_cast<long double>(c_ib)));
    out.push_back(static_cast<std::size_t>(std::floor(v + 1e-9L)));
  }
  return out;
}

// Forward pass written out per layer.
inline std::vector<double> probs(const ressl::MlpModel& m, const std::vector<double>& x) {
  const std::size_t d = m.input_dim(), h = m.hidden(), k = m.classes();
  std::vector<double> hid(h);
  for (std::size_t i = 0; i < h; ++i) {
    double z = m.b1(i);
    for (std::size_t j = 0; j < d; ++j) z += m.w1(i, j) * x[j];
    hid[i] = z > 0.0 ? z : 0.0;
  }
  std::vector<double> logit(k);
  double mx = -INFINITY;
  for (std::size_t c = 0; c < k; ++c) {
    double z = m.b2(c);
    for (std::size_t i = 0; i < h; ++i) z += m.w2(c, i) * hid[i];
    logit[c] = z;
    mx = std::max(mx, z);
  }
  double sum = 0.0;
  for (double& z : logit) sum += (z = std::exp(z - mx));
  for (double& z : logit) z /= sum;
  return logit;
}

// Smallest |pre-activation| over a batch; finite differences are only
// meaningful away from the ReLU kink.
inline double min_abs_preactivation(const ressl::MlpModel& m, const std::vector<std::vector<double>>& batch) {
  double out = INFINITY;
  for (const auto& x : batch) {
    for (std::size_t i = 0; i < m.hidden(); ++i) {
      double z = m.b1(i);
      for (std::size_t j = 0; j < m.input_dim(); ++j) z += m.w1(i, j) * x[j];
      out = std::min(out, std::abs(z));
    }
  }
  return out;
}

enum class Loss { hard, soft, mse };

inline double loss(const ressl::MlpModel& m, const std::vector<std::vector<double>>& batch,
                   const std::vector<int>& hard, const std::vector<std::vector<double>>& soft, Loss kind) {
  double total = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto p = probs(m, batch[n]);
    switch (kind) {
      case Loss::hard:
        total += -std::log(p[hard[n]]);
        break;
      case Loss::soft:
        for (std::size_t c = 0; c < p.size(); ++c) total += -soft[n][c] * std::log(p[c]);
        break;
      case Loss::mse: {
        double s = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) s += (p[c] - soft[n][c]) * (p[c] - soft[n][c]);
        total += s / static_cast<double>(p.size());
        break;
      }
    }
  }
  return total / static_cast<double>(batch.size());
}

// Random points on a jittered even grid in [0, 1], strictly increasing.
inline std::vector<double> jittered_grid(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  std::vector<double> xs(n);
  const double step = n > 1 ? 1.0 / static_cast<double>(n - 1) : 1.0;
  for (std::size_t i = 0; i < n; ++i) xs[i] = std::clamp((static_cast<double>(i) + jitter(rng)) * step, 0.0, 1.0);
  for (std::size_t i = 1; i < n; ++i) xs[i] = std::max(xs[i], xs[i - 1] + 1e-3);
  return xs;
}

// Accuracies on a 1e-3 lattice, as published tables report them; repeats
// are likely so zero discrepancies get exercised.
inline std::vector<double> lattice_accuracies(std::mt19937_64& rng, std::size_t n, int lo, int hi) {
  std::uniform_int_distribution<int> milli(lo, hi);
  std::vector<double> ys(n);
  for (auto& y : ys) y = milli(rng) / 1000.0;
  return ys;
}

}  // namespace oracle
