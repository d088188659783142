#include "lsor/som.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace lsor {

SomGrid::SomGrid(std::size_t n_rows, std::size_t n_cols, std::size_t latent_dim)
    : n_rows_(n_rows), n_cols_(n_cols), latent_dim_(latent_dim) {
  if (n_rows_ < 1 || n_cols_ < 1 || latent_dim_ < 1) {
    throw std::invalid_argument("som: grid dimensions must be positive");
  }
  representations_ = Tensor::zeros({cells(), latent_dim_}, true);
}

std::span<const double> SomGrid::cell(GridIndex idx) const {
  return representations_.values().subspan(linear(idx) * latent_dim_, latent_dim_);
}

void SomGrid::load_representations(std::span<const double> flat) {
  if (flat.size() != cells() * latent_dim_) {
    throw std::invalid_argument("som: representation buffer size mismatch");
  }
  auto dst = representations_.values_mut();
  std::copy(flat.begin(), flat.end(), dst.begin());
}

GridIndex nearest(const SomGrid& grid, std::span<const double> z) {
  if (z.size() != grid.dim()) {
    throw std::invalid_argument("nearest: latent dim mismatch");
  }
  for (double v : z) {
    if (std::isnan(v)) throw std::invalid_argument("nearest: NaN in latent vector");
  }
  auto reps = grid.representations().values();
  const std::size_t d = grid.dim();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    double dist = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = z[j] - reps[k * d + j];
      dist += diff * diff;
    }
    if (dist < best) {
      best = dist;
      best_k = k;
    }
  }
  return grid.from_linear(best_k);
}

std::vector<GridIndex> nearest_batch(const SomGrid& grid, const Tensor& z) {
  if (z.ndim() != 2 || z.dim(1) != grid.dim()) {
    throw std::invalid_argument("nearest: expected batch x dim, got " + shape_str(z.shape()));
  }
  std::vector<GridIndex> out;
  out.reserve(z.dim(0));
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    out.push_back(nearest(grid, z.values().subspan(i * grid.dim(), grid.dim())));
  }
  return out;
}

double tau_at(const TauSchedule& schedule, const SomGrid& grid, std::int64_t t) {
  if (schedule.tau_min <= 0.0 || schedule.tau_max < schedule.tau_min) {
    throw std::invalid_argument("tau: need 0 < tau_min <= tau_max");
  }
  if (t < 0) throw std::invalid_argument("tau: negative iteration");
  const auto T = static_cast<std::int64_t>(schedule.total_iterations);
  const double frac = T > 0 ? static_cast<double>(std::min(t, T)) / static_cast<double>(T) : 1.0;
  const double cells = static_cast<double>(grid.cells());
  return cells * schedule.tau_max * std::pow(schedule.tau_min / schedule.tau_max, frac);
}

std::vector<double> soft_weights(GridIndex eps, std::size_t n_rows, std::size_t n_cols,
                                 double tau) {
  if (tau <= 0.0) throw std::invalid_argument("soft_weights: tau must be positive");
  std::vector<double> w(n_rows * n_cols);
  double total = 0.0;
  for (std::size_t i = 0; i < n_rows; ++i) {
    for (std::size_t j = 0; j < n_cols; ++j) {
      const double l1 = std::abs(static_cast<double>(i) - static_cast<double>(eps.row)) +
                        std::abs(static_cast<double>(j) - static_cast<double>(eps.col));
      const double v = std::exp(-(l1 * l1) / (2.0 * tau));
      w[i * n_cols + j] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> hard_weights(GridIndex eps, std::size_t n_rows, std::size_t n_cols) {
  std::vector<double> w(n_rows * n_cols, 0.0);
  w[eps.row * n_cols + eps.col] = 1.0;
  return w;
}

Tensor stack_weights(const std::vector<std::vector<double>>& weights, std::size_t cells) {
  std::vector<double> flat;
  flat.reserve(weights.size() * cells);
  for (const auto& w : weights) {
    if (w.size() != cells) {
      throw std::invalid_argument("som: weight grid size " + std::to_string(w.size()) +
                                  " does not match cell count " + std::to_string(cells));
    }
    flat.insert(flat.end(), w.begin(), w.end());
  }
  return Tensor({weights.size(), cells}, std::move(flat), false);
}

Tensor som_loss(Tape& tape, const SomGrid& grid, const Tensor& z_u, const Tensor& z_v,
                const Tensor& w_u, const Tensor& w_v) {
  if (w_u.ndim() != 2 || w_u.dim(1) != grid.cells() || w_v.ndim() != 2 ||
      w_v.dim(1) != grid.cells()) {
    throw std::invalid_argument("som_loss: weight grid shape does not match SOM shape");
  }
  const double inv_n = 1.0 / static_cast<double>(z_u.dim(0));
  Tensor reps = grid.representations();
  Tensor du = tape.pairwise_sqdist(tape.stop_gradient(z_u), reps);
  Tensor dv = tape.pairwise_sqdist(tape.stop_gradient(z_v), reps);
  Tensor weighted = tape.add(tape.sum(tape.mul(w_u, du)), tape.sum(tape.mul(w_v, dv)));
  return tape.scale(weighted, inv_n);
}

Tensor commit_loss(Tape& tape, const Tensor& z_u, const Tensor& z_v, const Tensor& g_eps_u,
                   const Tensor& g_eps_v) {
  const double inv_n = 1.0 / static_cast<double>(z_u.dim(0));
  Tensor lu = tape.squared_norm(tape.sub(z_u, g_eps_u));
  Tensor lv = tape.squared_norm(tape.sub(z_v, g_eps_v));
  return tape.scale(tape.add(lu, lv), inv_n);
}

namespace {

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

}  // namespace

std::vector<double> kmeans(std::span<const double> points, std::size_t n, std::size_t d,
                           std::size_t k, std::uint64_t seed) {
  if (points.size() != n * d) throw std::invalid_argument("kmeans: point buffer size mismatch");
  if (n < k) {
    throw std::invalid_argument("kmeans: need at least k=" + std::to_string(k) + " points, got " +
                                std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  auto point = [&](std::size_t i) { return points.subspan(i * d, d); };

  // k-means++ seeding; the inverse-CDF draw keeps already-chosen points
  // (mass zero) from being picked again.
  std::vector<double> centers(k * d);
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t first = static_cast<std::size_t>(unit(rng) * static_cast<double>(n)) % n;
  std::copy(point(first).begin(), point(first).end(), centers.begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      min_sq[i] = std::min(min_sq[i], sqdist(point(i), {centers.data() + (c - 1) * d, d}));
      total += min_sq[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += min_sq[i];
        if (acc >= target && min_sq[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // all remaining mass zero (duplicate points): fall back to uniform
      pick = static_cast<std::size_t>(unit(rng) * static_cast<double>(n)) % n;
    }
    std::copy(point(pick).begin(), point(pick).end(), centers.begin() + c * d);
  }

  std::vector<std::size_t> assign(n, 0), prev(n, k);
  for (int iter = 0; iter < 100; ++iter) {
    // assignment
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = sqdist(point(i), {centers.data() + c * d, d});
        if (dist < best) {
          best = dist;
          best_c = c;
        }
      }
      assign[i] = best_c;
    }
    if (assign == prev) break;
    prev = assign;
    // update
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[assign[i]]++;
      for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += points[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j)
        centers[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
    // reseed empty clusters at the point farthest from its nearest center
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      double far_best = -1.0;
      std::size_t far_i = 0;
      for (std::size_t i = 0; i < n; ++i) {
        double nearest_sq = std::numeric_limits<double>::infinity();
        for (std::size_t c2 = 0; c2 < k; ++c2) {
          nearest_sq = std::min(nearest_sq, sqdist(point(i), {centers.data() + c2 * d, d}));
        }
        if (nearest_sq > far_best) {
          far_best = nearest_sq;
          far_i = i;
        }
      }
      std::copy(point(far_i).begin(), point(far_i).end(), centers.begin() + c * d);
    }
  }
  return centers;
}

}  // namespace lsor
