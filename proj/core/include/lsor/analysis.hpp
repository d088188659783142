#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsor/mlp.hpp"
#include "lsor/som.hpp"
#include "lsor/synthdata.hpp"
#include "lsor/tensor.hpp"

namespace lsor {

// Per-sample distribution over grid cells: rho = softmax(-d / gamma) with
// d_{i,j} = |z - g_{i,j}|^2 and gamma the population std of the d values.
struct SimilarityGrid {
  std::size_t rows = 0, cols = 0;
  std::vector<double> rho;  // row-major, sums to 1
  double gamma = 0.0;

  double at(std::size_t r, std::size_t c) const { return rho[r * cols + c]; }
};

SimilarityGrid similarity_grid(std::span<const double> z, const SomGrid& grid);

// Elementwise mean of member grids; empty groups are an error.
SimilarityGrid group_average(const std::vector<SimilarityGrid>& members,
                             const std::vector<std::size_t>& indices);

// Expected column index under rho; the "mass center" used for the
// age-shift monotonicity readout.
double expected_column(const SimilarityGrid& grid);

// Szekely distance correlation between an n x p and an n x q sample via
// double-centered pairwise distance matrices. Returns 0 when either distance
// variance vanishes.
double distance_correlation(std::span<const double> x, std::size_t n, std::size_t p,
                            std::span<const double> y, std::size_t q);

// Top-2 principal axes of the SOM representations (mean-centered, population
// covariance). Sign convention: the first nonzero loading of each axis is
// positive. Fewer than two nonzero eigenvalues is an error.
struct PcaBasis {
  std::size_t dim = 0;
  std::vector<double> mean;           // dim
  std::array<std::vector<double>, 2> axes;  // each dim
  std::array<double, 2> eigenvalues{0.0, 0.0};

  std::array<double, 2> project_point(std::span<const double> v) const;
  std::array<double, 2> project_direction(std::span<const double> v) const;  // no centering
};

PcaBasis pca_from_grid(const SomGrid& grid);

// Symmetric eigendecomposition helper (cyclic Jacobi); exposed for reuse.
// Returns eigenvalues ascending and column eigenvectors in row-major v.
void symmetric_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors);

// --- downstream probes -----------------------------------------------------

struct ProbeMetrics {
  double bacc = 0.0;
  double auc = 0.0;
  double r2 = 0.0;
  double rmse = 0.0;
};

enum class ProbeTask { Classification, Regression };

struct ProbeSplit {
  // row-major n x dim feature blocks with aligned targets
  std::vector<double> x_train, x_val, x_test;
  std::vector<double> y_train, y_val, y_test;
  std::size_t dim = 0;
};

// Two fully connected layers (hidden 64, leaky rectifier), Adam, best epoch
// selected on the validation split, metrics on the test split.
ProbeMetrics train_probe(const ProbeSplit& split, ProbeTask task, std::uint64_t seed);

struct ProbeCvResult {
  std::vector<ProbeMetrics> folds;
  ProbeMetrics mean;
  ProbeMetrics stddev;
};

// Subject-level 5-fold cross-validation with 10% of training subjects held
// out for validation. Latents: n x dim, one row per sample.
ProbeCvResult probe_cross_validate(std::span<const double> latents, std::size_t dim,
                                   std::span<const double> targets,
                                   std::span<const std::uint64_t> subject_ids, ProbeTask task,
                                   std::size_t n_folds, std::uint64_t seed);

// bacc: mean of per-class recalls at threshold 0.5 on the scores.
// auc: rank-based (Mann-Whitney) with ties counted 1/2.
std::pair<double, double> classification_metrics(std::span<const double> scores,
                                                 std::span<const std::uint8_t> labels);

// r2 = 1 - SS_res / SS_tot (zero-variance targets are an error); rmse.
std::pair<double, double> regression_metrics(std::span<const double> preds,
                                             std::span<const double> targets);

// --- cohort-level analysis --------------------------------------------------

// One row per visit of the cohort.
struct VisitRecord {
  std::uint64_t subject_id = 0;
  Group group = Group::NC;
  double time = 0.0;
  double age = 0.0;
  double cognitive_score = 0.0;
  double age_factor = 0.0;  // NaN if unknown
  GridIndex eps;
  SimilarityGrid rho;
};

struct CohortAnalysis {
  std::size_t grid_rows = 0, grid_cols = 0;
  bool columns_flipped = false;  // display orientation: age increases with column
  std::vector<VisitRecord> visits;
  Tensor latents;  // n x D, cohort order
};

// Encodes every visit, assigns grid cells, computes similarity grids, and
// fixes the display orientation so that the grid column increases with age.
CohortAnalysis analyze_cohort(const Mlp& encoder, const SomGrid& grid, const Cohort& cohort);

struct DcorRow {
  std::string covariate;
  double dcor = 0.0;
  std::size_t n = 0;
};

// Distance correlation of per-visit grid coordinates against age, cognitive
// score, the severe-decline indicator {pMCI, AD}, and - when the cohort
// carries ground truth - the latent age factor.
std::vector<DcorRow> dcor_table(const CohortAnalysis& analysis);

// Mean rho over visits selected by equal-count age bins, oldest last.
std::vector<SimilarityGrid> age_bin_averages(const CohortAnalysis& analysis, std::size_t bins);
SimilarityGrid group_average_grid(const CohortAnalysis& analysis, Group group);

}  // namespace lsor
