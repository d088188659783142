// Test-only reference implementations, kept independent of the library code
// paths they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "lsor/tensor.hpp"

namespace oracles {

// Central finite differences against the grads already stored on the params.
// Returns the worst error ratio |grad - fd| / max(atol, rtol * max(|grad|, |fd|));
// values <= 1 pass.
inline double finite_diff_worst_ratio(std::vector<lsor::Tensor> params,
                                      const std::function<double()>& loss_value,
                                      double h = 1e-4, double rtol = 1e-4, double atol = 1e-6) {
  double worst = 0.0;
  for (auto& p : params) {
    auto g = p.grad();
    auto x = p.values_mut();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double f_plus = loss_value();
      x[i] = saved - h;
      const double f_minus = loss_value();
      x[i] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      const double err = std::abs(g[i] - fd);
      const double tol = std::max(atol, rtol * std::max(std::abs(g[i]), std::abs(fd)));
      worst = std::max(worst, err / tol);
    }
  }
  return worst;
}

// Exhaustive concordant-pair AUC with ties counted 1/2.
inline double auc_by_pair_counting(std::span<const double> scores,
                                   std::span<const std::uint8_t> labels) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  if (pairs == 0) throw std::invalid_argument("auc oracle: need both classes");
  return num / static_cast<double>(pairs);
}

// Distance correlation via the explicit four-term double centering.
inline double dcor_brute_force(std::span<const double> x, std::size_t n, std::size_t p,
                               std::span<const double> y, std::size_t q) {
  auto dist = [&](std::span<const double> m, std::size_t dim, std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double diff = m[i * dim + c] - m[j * dim + c];
      s += diff * diff;
    }
    return std::sqrt(s);
  };
  auto centered = [&](std::span<const double> m, std::size_t dim) {
    std::vector<double> raw(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) raw[i * n + j] = dist(m, dim, i, j);
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double row = 0.0, col = 0.0, grand = 0.0;
        for (std::size_t k = 0; k < n; ++k) row += raw[i * n + k];
        for (std::size_t k = 0; k < n; ++k) col += raw[k * n + j];
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = 0; b < n; ++b) grand += raw[a * n + b];
        out[i * n + j] = raw[i * n + j] - row / n - col / n + grand / (n * n);
      }
    }
    return out;
  };
  const auto a = centered(x, p);
  const auto b = centered(y, q);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) {
    cov += a[i] * b[i];
    va += a[i] * a[i];
    vb += b[i] * b[i];
  }
  cov /= static_cast<double>(n * n);
  va /= static_cast<double>(n * n);
  vb /= static_cast<double>(n * n);
  if (va < 1e-12 || vb < 1e-12) return 0.0;
  return std::sqrt(std::max(cov, 0.0) / std::sqrt(va * vb));
}

// Top eigenpairs of a symmetric matrix by power iteration with deflation.
struct EigenPair {
  double value;
  std::vector<double> vector;
};

inline EigenPair power_iteration(std::vector<double> a, std::size_t n, std::uint64_t seed,
                                 int iters = 20000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = unit(rng);
  std::vector<double> w(n);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) w[i] += a[i * n + j] * v[j];
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) break;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
    lambda = norm;
  }
  // Rayleigh quotient for the final eigenvalue estimate
  double rq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * v[j];
    rq += v[i] * s;
  }
  return {rq, v};
}

inline std::vector<EigenPair> top_eigenpairs(std::vector<double> a, std::size_t n,
                                             std::size_t count, std::uint64_t seed) {
  std::vector<EigenPair> out;
  for (std::size_t k = 0; k < count; ++k) {
    EigenPair pair = power_iteration(a, n, seed + k);
    out.push_back(pair);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] -= pair.value * pair.vector[i] * pair.vector[j];
  }
  return out;
}

// Ordinary least squares R^2 (with intercept) by Gaussian elimination.
inline double ols_r2(std::span<const double> x, std::size_t n, std::size_t p,
                     std::span<const double> y) {
  const std::size_t m = p + 1;  // intercept column
  std::vector<double> xtx(m * m, 0.0), xty(m, 0.0);
  auto feat = [&](std::size_t i, std::size_t j) { return j == 0 ? 1.0 : x[i * p + (j - 1)]; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < m; ++a) {
      xty[a] += feat(i, a) * y[i];
      for (std::size_t b = 0; b < m; ++b) xtx[a * m + b] += feat(i, a) * feat(i, b);
    }
  }
  // tiny ridge keeps the elimination stable on collinear synthetic data
  for (std::size_t a = 0; a < m; ++a) xtx[a * m + a] += 1e-9;
  std::vector<double> beta = xty;
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::abs(xtx[r * m + col]) > std::abs(xtx[pivot * m + col])) pivot = r;
    }
    for (std::size_t c = 0; c < m; ++c) std::swap(xtx[col * m + c], xtx[pivot * m + c]);
    std::swap(beta[col], beta[pivot]);
    const double d = xtx[col * m + col];
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col || xtx[r * m + col] == 0.0) continue;
      const double f = xtx[r * m + col] / d;
      for (std::size_t c = 0; c < m; ++c) xtx[r * m + c] -= f * xtx[col * m + c];
      beta[r] -= f * beta[col];
    }
  }
  for (std::size_t a = 0; a < m; ++a) beta[a] /= xtx[a * m + a];

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += y[i];
  mean /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t a = 0; a < m; ++a) pred += beta[a] * feat(i, a);
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

}  // namespace oracles
