#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lsor/autodiff.hpp"
#include "lsor/tensor.hpp"

namespace lsor {

struct GridIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridIndex&) const = default;
};

// N_r x N_c grid of D-dimensional representations, stored as a
// (N_r * N_c) x D tensor in row-major cell order.
class SomGrid {
 public:
  SomGrid() = default;
  SomGrid(std::size_t n_rows, std::size_t n_cols, std::size_t latent_dim);

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return n_cols_; }
  std::size_t dim() const { return latent_dim_; }
  std::size_t cells() const { return n_rows_ * n_cols_; }

  std::size_t linear(GridIndex idx) const { return idx.row * n_cols_ + idx.col; }
  GridIndex from_linear(std::size_t k) const { return {k / n_cols_, k % n_cols_}; }

  Tensor representations() const { return representations_; }
  std::span<const double> cell(GridIndex idx) const;
  void load_representations(std::span<const double> flat);  // cells x dim, row-major

 private:
  std::size_t n_rows_ = 0, n_cols_ = 0, latent_dim_ = 0;
  Tensor representations_;  // requires_grad
};

// Index of the representation closest to z in Euclidean distance. Ties break
// toward the smallest row-major linear index; NaN coordinates are an error.
GridIndex nearest(const SomGrid& grid, std::span<const double> z);
std::vector<GridIndex> nearest_batch(const SomGrid& grid, const Tensor& z);

struct TauSchedule {
  double tau_min = 0.1;
  double tau_max = 1.0;
  std::size_t total_iterations = 1;
};

// tau(t) = N_r * N_c * tau_max * (tau_min / tau_max)^(t / T). Iterations past
// T clamp to T; negative t is an error.
double tau_at(const TauSchedule& schedule, const SomGrid& grid, std::int64_t t);

// Per-sample weight grid: w_{i,j} proportional to
// exp(-(L1 distance between eps and (i,j))^2 / (2 tau)), normalized to sum 1.
// Returned flat in row-major cell order.
std::vector<double> soft_weights(GridIndex eps, std::size_t n_rows, std::size_t n_cols,
                                 double tau);

// Hard-assignment ablation: indicator of eps.
std::vector<double> hard_weights(GridIndex eps, std::size_t n_rows, std::size_t n_cols);

// Stacks per-sample weight grids into a constant (batch x cells) tensor.
Tensor stack_weights(const std::vector<std::vector<double>>& weights, std::size_t cells);

// Mean over the batch of sum_{i,j} w_{i,j} |sg[z] - g_{i,j}|^2 for the u and v
// branches together. Gradients reach only the SOM representations.
Tensor som_loss(Tape& tape, const SomGrid& grid, const Tensor& z_u, const Tensor& z_v,
                const Tensor& w_u, const Tensor& w_v);

// Mean over the batch of |z_u - g_eps_u|^2 + |z_v - g_eps_v|^2. The g inputs
// are rows gathered from the grid on the tape, so both sides get gradients.
Tensor commit_loss(Tape& tape, const Tensor& z_u, const Tensor& z_v, const Tensor& g_eps_u,
                   const Tensor& g_eps_v);

// Lloyd's algorithm with k-means++ seeding, run to an assignment fixpoint or
// 100 iterations. Empty clusters are reseeded at the point farthest from its
// nearest center. Returns k x d centers, row-major.
std::vector<double> kmeans(std::span<const double> points, std::size_t n, std::size_t d,
                           std::size_t k, std::uint64_t seed);

}  // namespace lsor
