#pragma once

#include <string>
#include <vector>

#include "lsor/analysis.hpp"
#include "lsor/longitudinal.hpp"

namespace lsor {

// Per-visit table: subject_id, time, eps_row, eps_col, rho flattened
// row-major, then the covariates (age, group, cognitive score).
void write_samples_csv(const CohortAnalysis& analysis, const std::string& path);

void write_dcor_csv(const std::vector<DcorRow>& rows, const std::string& path);

// PCA outputs: projected per-visit latents with projected trajectory arrows,
// the grid lattice (cell positions plus neighbor edges), and the projected
// reference trajectories.
struct PcaReportPaths {
  std::string points;
  std::string grid_edges;
  std::string ref_arrows;
};
void write_pca_csvs(const PcaBasis& basis, const CohortAnalysis& analysis, const SomGrid& grid,
                    const ReferenceTrajectories& refs, const Cohort& cohort,
                    const PcaReportPaths& paths);

// Probe metrics with per-fold rows followed by mean and std summary rows.
struct ProbeReportRow {
  std::string task;
  std::string fold;  // "0".."k-1", "mean", "std"
  ProbeMetrics metrics;
};
void write_probe_csv(const std::vector<ProbeReportRow>& rows, const std::string& path);
std::vector<ProbeReportRow> probe_report_rows(const std::string& task, const ProbeCvResult& cv);

// One SVG heatmap per group average; returns the file paths written.
std::vector<std::string> write_heatmap_svgs(const CohortAnalysis& analysis,
                                            const std::string& directory, std::size_t age_bins);

}  // namespace lsor
