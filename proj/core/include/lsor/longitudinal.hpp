#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsor/autodiff.hpp"
#include "lsor/som.hpp"
#include "lsor/tensor.hpp"

namespace lsor {

// Per-cell average aging vectors, maintained by EMA outside of autodiff.
// Cells start uninitialized and are skipped by the direction loss until the
// first batch assigns a sample to them.
class ReferenceTrajectories {
 public:
  ReferenceTrajectories() = default;
  ReferenceTrajectories(std::size_t n_rows, std::size_t n_cols, std::size_t latent_dim);

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return n_cols_; }
  std::size_t dim() const { return latent_dim_; }
  std::size_t cells() const { return n_rows_ * n_cols_; }

  bool initialized(std::size_t cell) const { return initialized_[cell]; }
  std::span<const double> cell(std::size_t cell) const;
  std::size_t uninitialized_count() const;

  std::span<const double> raw() const { return values_; }
  std::span<const std::uint8_t> flags() const { return initialized_; }
  void load(std::span<const double> values, std::span<const std::uint8_t> flags);

  friend void ema_update(ReferenceTrajectories& refs, const struct BatchTrajectoryStats& stats,
                         double alpha, std::uint64_t t);

 private:
  std::size_t n_rows_ = 0, n_cols_ = 0, latent_dim_ = 0;
  std::vector<double> values_;          // cells x dim
  std::vector<std::uint8_t> initialized_;
};

// Per-cell sums and counts of detached trajectories, keyed by eps_u.
struct BatchTrajectoryStats {
  std::size_t n_rows = 0, n_cols = 0, latent_dim = 0;
  std::size_t batch_size = 0;
  std::vector<double> sums;          // cells x dim
  std::vector<std::size_t> counts;   // cells; sum == batch_size

  std::vector<double> cell_mean(std::size_t cell) const;  // Delta h; counts[cell] must be > 0
};

BatchTrajectoryStats accumulate_trajectories(const std::vector<GridIndex>& eps_u,
                                             std::span<const double> delta_z, std::size_t dim,
                                             std::size_t n_rows, std::size_t n_cols);

// EMA update with the three cases:
//   t == 0:                 Delta g <- Delta h where the cell was hit
//   t > 0, cell not hit:    unchanged
//   t > 0, cell hit:        alpha * Delta g + (1 - alpha) * Delta h
//                           (a first-ever hit adopts Delta h outright)
void ema_update(ReferenceTrajectories& refs, const BatchTrajectoryStats& stats, double alpha,
                std::uint64_t t);

// (z_v - z_u) / delta_t for single D-vectors; differentiable through both.
Tensor trajectory(Tape& tape, const Tensor& z_u, const Tensor& z_v, double delta_t);

// Batched variant: rows of (z_v - z_u) scaled by 1 / delta_t[i].
Tensor trajectory_batch(Tape& tape, const Tensor& z_u, const Tensor& z_v,
                        std::span<const double> delta_t);

struct DirectionLossResult {
  Tensor loss;              // scalar; zero constant when no sample qualifies
  std::size_t included = 0;
  std::size_t excluded = 0;  // uninitialized cell or vanishing norms
};

// Mean over included samples of 1 - cos(delta_z, Delta g_{eps_u}). The
// reference trajectories enter as constants, so gradients reach only delta_z.
DirectionLossResult direction_loss(Tape& tape, const Tensor& delta_z,
                                   const ReferenceTrajectories& refs,
                                   const std::vector<GridIndex>& eps_u);

}  // namespace lsor
