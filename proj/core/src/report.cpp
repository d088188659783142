#include "lsor/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "lsor/svg.hpp"

namespace lsor {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  return out;
}

}  // namespace

void write_samples_csv(const CohortAnalysis& analysis, const std::string& path) {
  auto out = open_out(path);
  out << "subject_id,time,eps_row,eps_col";
  for (std::size_t c = 0; c < analysis.grid_rows * analysis.grid_cols; ++c) out << ",rho_" << c;
  out << ",age,group,cognitive_score\n";
  for (const auto& v : analysis.visits) {
    out << v.subject_id << "," << fmt(v.time) << "," << v.eps.row << "," << v.eps.col;
    for (double r : v.rho.rho) out << "," << fmt(r);
    out << "," << fmt(v.age) << "," << group_name(v.group) << "," << fmt(v.cognitive_score)
        << "\n";
  }
}

void write_dcor_csv(const std::vector<DcorRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "covariate,dcor,n\n";
  for (const auto& r : rows) out << r.covariate << "," << fmt(r.dcor) << "," << r.n << "\n";
}

void write_pca_csvs(const PcaBasis& basis, const CohortAnalysis& analysis, const SomGrid& grid,
                    const ReferenceTrajectories& refs, const Cohort& cohort,
                    const PcaReportPaths& paths) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // per-visit projections with the trajectory arrow to the next visit
  {
    auto out = open_out(paths.points);
    out << "subject_id,time,pc1,pc2,dpc1,dpc2\n";
    std::size_t row = 0;
    const std::size_t d = grid.dim();
    auto latents = analysis.latents.values();
    for (const auto& subject : cohort.subjects) {
      for (std::size_t k = 0; k < subject.visits.size(); ++k, ++row) {
        const auto p = basis.project_point(latents.subspan(row * d, d));
        double dp1 = nan, dp2 = nan;
        if (k + 1 < subject.visits.size()) {
          const double dt = subject.visits[k + 1].time - subject.visits[k].time;
          std::vector<double> dz(d);
          for (std::size_t j = 0; j < d; ++j) {
            dz[j] = (latents[(row + 1) * d + j] - latents[row * d + j]) / dt;
          }
          const auto dp = basis.project_direction(dz);
          dp1 = dp[0];
          dp2 = dp[1];
        }
        out << subject.id << "," << fmt(subject.visits[k].time) << "," << fmt(p[0]) << ","
            << fmt(p[1]) << "," << fmt(dp1) << "," << fmt(dp2) << "\n";
      }
    }
  }
  // lattice: one row per grid edge (right and down neighbors)
  {
    auto out = open_out(paths.grid_edges);
    out << "row,col,pc1,pc2,nbr_row,nbr_col,nbr_pc1,nbr_pc2\n";
    auto cell_proj = [&](std::size_t r, std::size_t c) {
      return basis.project_point(grid.cell({r, c}));
    };
    for (std::size_t r = 0; r < grid.rows(); ++r) {
      for (std::size_t c = 0; c < grid.cols(); ++c) {
        const auto p = cell_proj(r, c);
        if (c + 1 < grid.cols()) {
          const auto q = cell_proj(r, c + 1);
          out << r << "," << c << "," << fmt(p[0]) << "," << fmt(p[1]) << "," << r << "," << c + 1
              << "," << fmt(q[0]) << "," << fmt(q[1]) << "\n";
        }
        if (r + 1 < grid.rows()) {
          const auto q = cell_proj(r + 1, c);
          out << r << "," << c << "," << fmt(p[0]) << "," << fmt(p[1]) << "," << r + 1 << "," << c
              << "," << fmt(q[0]) << "," << fmt(q[1]) << "\n";
        }
      }
    }
  }
  // reference trajectories as arrows anchored at the projected cell
  {
    auto out = open_out(paths.ref_arrows);
    out << "row,col,initialized,pc1,pc2,dpc1,dpc2\n";
    for (std::size_t r = 0; r < grid.rows(); ++r) {
      for (std::size_t c = 0; c < grid.cols(); ++c) {
        const std::size_t cell = r * grid.cols() + c;
        const auto p = basis.project_point(grid.cell({r, c}));
        if (refs.initialized(cell)) {
          const auto dp = basis.project_direction(refs.cell(cell));
          out << r << "," << c << ",1," << fmt(p[0]) << "," << fmt(p[1]) << "," << fmt(dp[0])
              << "," << fmt(dp[1]) << "\n";
        } else {
          out << r << "," << c << ",0," << fmt(p[0]) << "," << fmt(p[1]) << "," << fmt(nan) << ","
              << fmt(nan) << "\n";
        }
      }
    }
  }
}

std::vector<ProbeReportRow> probe_report_rows(const std::string& task, const ProbeCvResult& cv) {
  std::vector<ProbeReportRow> rows;
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    rows.push_back({task, std::to_string(i), cv.folds[i]});
  }
  rows.push_back({task, "mean", cv.mean});
  rows.push_back({task, "std", cv.stddev});
  return rows;
}

void write_probe_csv(const std::vector<ProbeReportRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "task,fold,bacc,auc,r2,rmse\n";
  for (const auto& r : rows) {
    out << r.task << "," << r.fold << "," << fmt(r.metrics.bacc) << "," << fmt(r.metrics.auc)
        << "," << fmt(r.metrics.r2) << "," << fmt(r.metrics.rmse) << "\n";
  }
}

std::vector<std::string> write_heatmap_svgs(const CohortAnalysis& analysis,
                                            const std::string& directory, std::size_t age_bins) {
  std::vector<std::string> written;
  const auto bins = age_bin_averages(analysis, age_bins);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const std::string path = directory + "/heatmap_age_bin_" + std::to_string(b) + ".svg";
    write_heatmap_svg(path, bins[b].rows, bins[b].cols, bins[b].rho,
                      "mean similarity grid, age bin " + std::to_string(b));
    written.push_back(path);
  }
  for (Group g : {Group::NC, Group::sMCI, Group::pMCI, Group::AD}) {
    bool present = false;
    for (const auto& v : analysis.visits) present = present || v.group == g;
    if (!present) continue;
    const auto avg = group_average_grid(analysis, g);
    const std::string path = directory + "/heatmap_group_" + group_name(g) + ".svg";
    write_heatmap_svg(path, avg.rows, avg.cols, avg.rho,
                      std::string("mean similarity grid, ") + group_name(g));
    written.push_back(path);
  }
  return written;
}

}  // namespace lsor
