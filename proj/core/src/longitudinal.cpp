#include "lsor/longitudinal.hpp"

#include <cmath>
#include <stdexcept>

namespace lsor {

namespace {
constexpr double kNormFloor = 1e-12;
}

ReferenceTrajectories::ReferenceTrajectories(std::size_t n_rows, std::size_t n_cols,
                                             std::size_t latent_dim)
    : n_rows_(n_rows), n_cols_(n_cols), latent_dim_(latent_dim) {
  values_.assign(cells() * latent_dim_, 0.0);
  initialized_.assign(cells(), 0);
}

std::span<const double> ReferenceTrajectories::cell(std::size_t cell) const {
  return std::span<const double>(values_).subspan(cell * latent_dim_, latent_dim_);
}

std::size_t ReferenceTrajectories::uninitialized_count() const {
  std::size_t n = 0;
  for (auto f : initialized_) n += f == 0;
  return n;
}

void ReferenceTrajectories::load(std::span<const double> values,
                                 std::span<const std::uint8_t> flags) {
  if (values.size() != values_.size() || flags.size() != initialized_.size()) {
    throw std::invalid_argument("reference trajectories: buffer size mismatch");
  }
  std::copy(values.begin(), values.end(), values_.begin());
  std::copy(flags.begin(), flags.end(), initialized_.begin());
}

std::vector<double> BatchTrajectoryStats::cell_mean(std::size_t cell) const {
  if (counts[cell] == 0) throw std::logic_error("trajectory stats: mean of empty cell");
  std::vector<double> out(latent_dim);
  for (std::size_t j = 0; j < latent_dim; ++j) {
    out[j] = sums[cell * latent_dim + j] / static_cast<double>(counts[cell]);
  }
  return out;
}

BatchTrajectoryStats accumulate_trajectories(const std::vector<GridIndex>& eps_u,
                                             std::span<const double> delta_z, std::size_t dim,
                                             std::size_t n_rows, std::size_t n_cols) {
  const std::size_t n = eps_u.size();
  if (delta_z.size() != n * dim) {
    throw std::invalid_argument("trajectory stats: delta_z buffer size mismatch");
  }
  BatchTrajectoryStats stats;
  stats.n_rows = n_rows;
  stats.n_cols = n_cols;
  stats.latent_dim = dim;
  stats.batch_size = n;
  stats.sums.assign(n_rows * n_cols * dim, 0.0);
  stats.counts.assign(n_rows * n_cols, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t cell = eps_u[k].row * n_cols + eps_u[k].col;
    stats.counts[cell]++;
    for (std::size_t j = 0; j < dim; ++j) stats.sums[cell * dim + j] += delta_z[k * dim + j];
  }
  return stats;
}

void ema_update(ReferenceTrajectories& refs, const BatchTrajectoryStats& stats, double alpha,
                std::uint64_t t) {
  if (alpha <= 0.0 || alpha >= 1.0) {
    throw std::invalid_argument("ema: alpha must lie in (0, 1)");
  }
  if (stats.n_rows != refs.rows() || stats.n_cols != refs.cols() ||
      stats.latent_dim != refs.dim()) {
    throw std::invalid_argument("ema: stats shape does not match reference grid");
  }
  const std::size_t d = refs.dim();
  for (std::size_t cell = 0; cell < refs.cells(); ++cell) {
    if (stats.counts[cell] == 0) continue;  // untouched this batch
    const auto mean = stats.cell_mean(cell);
    double* dst = refs.values_.data() + cell * d;
    if (t == 0 || !refs.initialized_[cell]) {
      for (std::size_t j = 0; j < d; ++j) dst[j] = mean[j];
      refs.initialized_[cell] = 1;
    } else {
      for (std::size_t j = 0; j < d; ++j) dst[j] = alpha * dst[j] + (1.0 - alpha) * mean[j];
    }
  }
}

Tensor trajectory(Tape& tape, const Tensor& z_u, const Tensor& z_v, double delta_t) {
  if (delta_t <= 0.0) throw std::invalid_argument("trajectory: delta_t must be positive");
  return tape.scale(tape.sub(z_v, z_u), 1.0 / delta_t);
}

Tensor trajectory_batch(Tape& tape, const Tensor& z_u, const Tensor& z_v,
                        std::span<const double> delta_t) {
  if (z_u.ndim() != 2 || z_u.dim(0) != delta_t.size()) {
    throw std::invalid_argument("trajectory: batch size mismatch");
  }
  const std::size_t n = delta_t.size();
  std::vector<double> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (delta_t[i] <= 0.0) throw std::invalid_argument("trajectory: delta_t must be positive");
    inv[i] = 1.0 / delta_t[i];
  }
  Tensor inv_dt({n}, std::move(inv), false);
  return tape.mul_colvec(tape.sub(z_v, z_u), inv_dt);
}

DirectionLossResult direction_loss(Tape& tape, const Tensor& delta_z,
                                   const ReferenceTrajectories& refs,
                                   const std::vector<GridIndex>& eps_u) {
  if (delta_z.ndim() != 2 || delta_z.dim(1) != refs.dim()) {
    throw std::invalid_argument("direction_loss: delta_z shape mismatch");
  }
  const std::size_t n = delta_z.dim(0), d = refs.dim();
  if (eps_u.size() != n) throw std::invalid_argument("direction_loss: eps count mismatch");

  // Select samples with an initialized reference cell and non-vanishing norms.
  std::vector<std::size_t> keep;
  std::vector<double> ref_rows;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t cell = eps_u[k].row * refs.cols() + eps_u[k].col;
    if (!refs.initialized(cell)) continue;
    double nz = 0.0, ng = 0.0;
    auto ref = refs.cell(cell);
    for (std::size_t j = 0; j < d; ++j) {
      nz += delta_z.at(k * d + j) * delta_z.at(k * d + j);
      ng += ref[j] * ref[j];
    }
    if (std::sqrt(nz) < kNormFloor || std::sqrt(ng) < kNormFloor) continue;
    keep.push_back(k);
    ref_rows.insert(ref_rows.end(), ref.begin(), ref.end());
  }

  DirectionLossResult result;
  result.included = keep.size();
  result.excluded = n - keep.size();
  if (keep.empty()) {
    result.loss = Tensor::scalar(0.0);
    return result;
  }
  Tensor refs_const({keep.size(), d}, std::move(ref_rows), false);
  Tensor cos_rows = tape.row_cosine(tape.gather_rows(delta_z, keep), refs_const);
  // mean of (1 - cos) over the included samples
  const double inv = 1.0 / static_cast<double>(keep.size());
  result.loss = tape.add_scalar(tape.scale(tape.sum(cos_rows), -inv), 1.0);
  return result;
}

}  // namespace lsor
