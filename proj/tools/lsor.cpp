// lsor command line: synthetic cohort generation, two-phase training,
// post-hoc analysis, and frozen-encoder probes, each leaving a run manifest.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lsor/analysis.hpp"
#include "lsor/report.hpp"
#include "lsor/synthdata.hpp"
#include "lsor/trainer.hpp"
#include "lsor/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
  return buf;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw std::runtime_error(what + " not found: " + path);
  }
}

// Creates the run directory only after the inputs were validated, so a bad
// invocation leaves nothing behind.
void prepare_run_dir(const std::string& dir, bool force) {
  if (fs::exists(dir)) {
    if (!force && !fs::is_empty(dir)) {
      throw std::runtime_error("output directory " + dir +
                               " is not empty (pass --force to reuse it)");
    }
  } else {
    fs::create_directories(dir);
  }
}

void write_manifest(const std::string& dir, json manifest) {
  manifest["version"] = lsor::kVersion;
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

json config_json(const lsor::TrainConfig& config) {
  return json::parse(lsor::config_to_json_text(config));
}

// file > defaults, flags > file
lsor::TrainConfig resolve_config(CLI::App* cmd, const std::string& config_path,
                                 const lsor::TrainConfig& flag_values) {
  lsor::TrainConfig cfg;
  if (!config_path.empty()) {
    require_file(config_path, "config file");
    cfg = lsor::config_from_json_file(config_path);
  }
  auto chosen = [&](const char* flag) { return cmd->count(flag) > 0; };
  if (chosen("--lambda-commit")) cfg.lambda_commit = flag_values.lambda_commit;
  if (chosen("--lambda-som")) cfg.lambda_som = flag_values.lambda_som;
  if (chosen("--lambda-dir")) cfg.lambda_dir = flag_values.lambda_dir;
  if (chosen("--learning-rate")) cfg.learning_rate = flag_values.learning_rate;
  if (chosen("--weight-decay")) cfg.weight_decay = flag_values.weight_decay;
  if (chosen("--pretrain-epochs")) cfg.pretrain_epochs = flag_values.pretrain_epochs;
  if (chosen("--train-epochs")) cfg.train_epochs = flag_values.train_epochs;
  if (chosen("--batch-size")) cfg.batch_size = flag_values.batch_size;
  if (chosen("--ema-alpha")) cfg.ema_alpha = flag_values.ema_alpha;
  if (chosen("--tau-min")) cfg.tau_min = flag_values.tau_min;
  if (chosen("--tau-max")) cfg.tau_max = flag_values.tau_max;
  if (chosen("--grid-rows")) cfg.grid_rows = flag_values.grid_rows;
  if (chosen("--grid-cols")) cfg.grid_cols = flag_values.grid_cols;
  if (chosen("--seed")) cfg.seed = flag_values.seed;
  if (chosen("--latent-dim")) cfg.latent_dim = flag_values.latent_dim;
  if (chosen("--hidden-dims")) cfg.hidden_dims = flag_values.hidden_dims;
  if (chosen("--leaky-slope")) cfg.leaky_slope = flag_values.leaky_slope;
  if (chosen("--checkpoint-every")) cfg.checkpoint_every = flag_values.checkpoint_every;
  cfg.validate();
  return cfg;
}

void add_train_flags(CLI::App* cmd, lsor::TrainConfig& cfg) {
  cmd->add_option("--lambda-commit", cfg.lambda_commit, "commitment loss weight")
      ->capture_default_str();
  cmd->add_option("--lambda-som", cfg.lambda_som, "SOM loss weight")->capture_default_str();
  cmd->add_option("--lambda-dir", cfg.lambda_dir, "direction loss weight")->capture_default_str();
  cmd->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate")
      ->capture_default_str();
  cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  cmd->add_option("--pretrain-epochs", cfg.pretrain_epochs, "reconstruction-only epochs")
      ->capture_default_str();
  cmd->add_option("--train-epochs", cfg.train_epochs, "full-objective epochs")
      ->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size, "pairs per batch")->capture_default_str();
  cmd->add_option("--ema-alpha", cfg.ema_alpha, "EMA keep rate for reference trajectories")
      ->capture_default_str();
  cmd->add_option("--tau-min", cfg.tau_min, "final kernel width factor")->capture_default_str();
  cmd->add_option("--tau-max", cfg.tau_max, "initial kernel width factor")->capture_default_str();
  cmd->add_option("--grid-rows", cfg.grid_rows, "SOM grid rows")->capture_default_str();
  cmd->add_option("--grid-cols", cfg.grid_cols, "SOM grid columns")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "training seed")->capture_default_str();
  cmd->add_option("--latent-dim", cfg.latent_dim, "latent dimension")->capture_default_str();
  cmd->add_option("--hidden-dims", cfg.hidden_dims, "encoder hidden layer dims")
      ->capture_default_str();
  cmd->add_option("--leaky-slope", cfg.leaky_slope, "leaky rectifier slope")
      ->capture_default_str();
  cmd->add_option("--checkpoint-every", cfg.checkpoint_every,
                  "epochs between intermediate checkpoints (0 = none)")
      ->capture_default_str();
}

std::size_t count_empty_clusters(const lsor::Trainer& trainer) {
  lsor::Tensor latents = trainer.encode_all_visits();
  const auto assignments = lsor::nearest_batch(trainer.grid(), latents);
  std::vector<std::size_t> hits(trainer.grid().cells(), 0);
  for (const auto& eps : assignments) hits[trainer.grid().linear(eps)]++;
  std::size_t empty = 0;
  for (std::size_t h : hits) empty += h == 0;
  return empty;
}

int run_training_command(const std::string& cohort_path, std::string out_dir, bool force,
                         lsor::TrainConfig cfg, const std::string& command, json extra) {
  Timer timer;
  require_file(cohort_path, "cohort file");
  if (out_dir.empty()) {
    out_dir = "runs/" + command + "-" + timestamp() + "-seed" + std::to_string(cfg.seed);
  }
  lsor::Cohort cohort = lsor::read_cohort_csv(cohort_path);
  prepare_run_dir(out_dir, force);

  lsor::Trainer trainer(cohort, cfg);
  std::cerr << "pretraining (" << cfg.pretrain_epochs << " epochs)...\n";
  const auto pretrain_recon = trainer.pretrain();
  for (std::size_t e = 0; e < pretrain_recon.size(); ++e) {
    std::cerr << "  pretrain epoch " << e + 1 << " recon " << pretrain_recon[e] << "\n";
  }
  std::cerr << "training (" << cfg.train_epochs << " epochs)...\n";
  std::vector<std::string> intermediate;
  const auto rows = trainer.train([&](int epoch, const lsor::EpochRow&) {
    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 &&
        epoch < cfg.train_epochs) {
      const std::string path = out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".bin";
      trainer.save_checkpoint(path);
      intermediate.push_back(path);
    }
  });
  if (!rows.empty()) {
    const auto& last = rows.back();
    std::cerr << "  final epoch total " << last.total << " (recon " << last.recon << ", commit "
              << last.commit << ", som " << last.som << ", dir " << last.dir << ")\n";
  }

  const std::string ckpt = out_dir + "/checkpoint.bin";
  const std::string metrics = out_dir + "/metrics.csv";
  trainer.save_checkpoint(ckpt);
  lsor::write_metrics_csv(rows, metrics);

  json manifest;
  manifest["command"] = command;
  manifest["seed"] = cfg.seed;
  manifest["config"] = config_json(cfg);
  manifest["inputs"] = {{"cohort", cohort_path}};
  json artifacts = {{"checkpoint", ckpt}, {"metrics", metrics}};
  if (!intermediate.empty()) artifacts["intermediate_checkpoints"] = intermediate;
  manifest["artifacts"] = artifacts;
  manifest["stats"] = {{"pairs", lsor::all_pairs(cohort).size()},
                       {"empty_clusters", count_empty_clusters(trainer)},
                       {"uninitialized_reference_cells", trainer.refs().uninitialized_count()}};
  for (auto& [key, value] : extra.items()) manifest[key] = value;
  manifest["timings"] = {{"total_seconds", timer.seconds()}};
  write_manifest(out_dir, manifest);
  std::cout << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-organized representation learning on longitudinal vector data"};
  app.require_subcommand(1);

  // --- gen -------------------------------------------------------------
  lsor::GenConfig gen_cfg;
  std::string gen_out = "cohort.csv";
  std::vector<double> gen_mix{0.3, 0.3, 0.2, 0.2};
  bool gen_force = false;
  auto* gen = app.add_subcommand("gen", "generate a synthetic longitudinal cohort CSV");
  gen->add_option("--subjects", gen_cfg.n_subjects, "number of subjects")->capture_default_str();
  gen->add_option("--visits-min", gen_cfg.visits_min, "minimum visits per subject")
      ->capture_default_str();
  gen->add_option("--visits-max", gen_cfg.visits_max, "maximum visits per subject")
      ->capture_default_str();
  gen->add_option("--input-dim", gen_cfg.input_dim, "observation dimension")
      ->capture_default_str();
  gen->add_option("--mix", gen_mix, "group mix NC sMCI pMCI AD (sums to 1)")
      ->expected(4)
      ->capture_default_str();
  gen->add_option("--baseline-age-mean", gen_cfg.baseline_age_mean, "baseline age mean")
      ->capture_default_str();
  gen->add_option("--baseline-age-std", gen_cfg.baseline_age_std, "baseline age std")
      ->capture_default_str();
  gen->add_option("--amplitude", gen_cfg.obs_amplitude, "observation signal scale")
      ->capture_default_str();
  gen->add_option("--noise", gen_cfg.noise_sigma, "observation noise sigma")
      ->capture_default_str();
  gen->add_option("--cog-noise", gen_cfg.cog_noise_sigma, "cognitive score noise sigma")
      ->capture_default_str();
  gen->add_option("--seed", gen_cfg.seed, "generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output cohort CSV path")->capture_default_str();
  gen->add_flag("--force", gen_force, "overwrite an existing output file");

  // --- train -----------------------------------------------------------
  lsor::TrainConfig train_cfg;
  std::string train_cohort, train_out, train_config_path;
  bool train_force = false;
  auto* train = app.add_subcommand("train", "two-phase training on a cohort CSV");
  train->add_option("--cohort", train_cohort, "cohort CSV path")->required();
  train->add_option("--out", train_out, "run directory (default runs/<timestamp>-seed<seed>)");
  train->add_option("--config", train_config_path,
                    "JSON config file (flags override file values)");
  train->add_flag("--force", train_force, "reuse a non-empty run directory");
  add_train_flags(train, train_cfg);

  // --- ablate ----------------------------------------------------------
  lsor::TrainConfig ablate_cfg;
  std::string ablate_cohort, ablate_out, ablate_config_path;
  bool ablate_force = false, ablate_hard = false, ablate_nodir = false, ablate_plain = false;
  auto* ablate = app.add_subcommand(
      "ablate", "retrain with hard SOM assignment and/or disabled direction loss");
  ablate->add_option("--cohort", ablate_cohort, "cohort CSV path")->required();
  ablate->add_option("--out", ablate_out, "run directory");
  ablate->add_option("--config", ablate_config_path, "JSON config file");
  ablate->add_flag("--force", ablate_force, "reuse a non-empty run directory");
  ablate->add_flag("--hard-som", ablate_hard, "hard cluster assignment (w = indicator)");
  ablate->add_flag("--no-dir", ablate_nodir, "disable the direction loss (lambda_dir = 0)");
  ablate->add_flag("--plain-ae", ablate_plain,
                   "plain autoencoder: all regularizers off, no SOM reconstruction terms");
  add_train_flags(ablate, ablate_cfg);

  // --- analyze ---------------------------------------------------------
  std::string an_ckpt, an_cohort, an_out;
  std::size_t an_bins = 4;
  bool an_force = false;
  auto* analyze =
      app.add_subcommand("analyze", "similarity grids, dcor report, PCA projection, heatmaps");
  analyze->add_option("--checkpoint", an_ckpt, "trained checkpoint path")->required();
  analyze->add_option("--cohort", an_cohort, "cohort CSV path")->required();
  analyze->add_option("--out", an_out, "output directory")->required();
  analyze->add_option("--age-bins", an_bins, "number of age bins for averages")
      ->capture_default_str();
  analyze->add_flag("--force", an_force, "reuse a non-empty output directory");

  // --- probe -----------------------------------------------------------
  std::string pr_ckpt, pr_cohort, pr_out, pr_task = "both";
  std::size_t pr_folds = 5;
  std::uint64_t pr_seed = 7;
  bool pr_force = false;
  auto* probe = app.add_subcommand("probe", "frozen-encoder downstream probes");
  probe->add_option("--checkpoint", pr_ckpt, "trained checkpoint path")->required();
  probe->add_option("--cohort", pr_cohort, "cohort CSV path")->required();
  probe->add_option("--out", pr_out, "output directory")->required();
  probe->add_option("--task", pr_task, "classification | regression | both")
      ->capture_default_str();
  probe->add_option("--folds", pr_folds, "cross-validation folds")->capture_default_str();
  probe->add_option("--seed", pr_seed, "probe seed")->capture_default_str();
  probe->add_flag("--force", pr_force, "reuse a non-empty output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Timer timer;
      for (std::size_t g = 0; g < 4; ++g) gen_cfg.group_mix[g] = gen_mix[g];
      if (fs::exists(gen_out) && !gen_force) {
        throw std::runtime_error("output file " + gen_out + " exists (pass --force)");
      }
      const lsor::Cohort cohort = lsor::generate_cohort(gen_cfg);
      lsor::write_cohort_csv(cohort, gen_out);
      std::cerr << "wrote " << cohort.total_visits() << " visits of " << cohort.subjects.size()
                << " subjects in " << timer.seconds() << "s\n";
      std::cout << gen_out << "\n";
      return 0;
    }

    if (train->parsed()) {
      lsor::TrainConfig cfg = resolve_config(train, train_config_path, train_cfg);
      return run_training_command(train_cohort, train_out, train_force, cfg, "train", json{});
    }

    if (ablate->parsed()) {
      lsor::TrainConfig cfg = resolve_config(ablate, ablate_config_path, ablate_cfg);
      if (ablate_hard) cfg.hard_som = true;
      if (ablate_nodir) cfg.lambda_dir = 0.0;
      if (ablate_plain) {
        cfg.lambda_commit = 0.0;
        cfg.lambda_som = 0.0;
        cfg.lambda_dir = 0.0;
        cfg.recon_g_terms = false;
      }
      json extra;
      extra["ablation"] = {
          {"hard_som", ablate_hard}, {"no_dir", ablate_nodir}, {"plain_ae", ablate_plain}};
      return run_training_command(ablate_cohort, ablate_out, ablate_force, cfg, "ablate", extra);
    }

    if (analyze->parsed()) {
      Timer timer;
      require_file(an_ckpt, "checkpoint");
      require_file(an_cohort, "cohort file");
      const lsor::LoadedModel model = lsor::load_checkpoint(an_ckpt);
      const lsor::Cohort cohort = lsor::read_cohort_csv(an_cohort);
      prepare_run_dir(an_out, an_force);

      const lsor::CohortAnalysis analysis =
          lsor::analyze_cohort(model.encoder, model.grid, cohort);
      const auto dcor_rows = lsor::dcor_table(analysis);
      const lsor::PcaBasis basis = lsor::pca_from_grid(model.grid);

      const std::string samples = an_out + "/samples.csv";
      const std::string dcor = an_out + "/dcor.csv";
      lsor::PcaReportPaths pca_paths{an_out + "/pca_points.csv", an_out + "/pca_grid_edges.csv",
                                     an_out + "/pca_ref_arrows.csv"};
      lsor::write_samples_csv(analysis, samples);
      lsor::write_dcor_csv(dcor_rows, dcor);
      lsor::write_pca_csvs(basis, analysis, model.grid, model.refs, cohort, pca_paths);
      const auto heatmaps = lsor::write_heatmap_svgs(analysis, an_out, an_bins);

      json manifest;
      manifest["command"] = "analyze";
      manifest["seed"] = model.config.seed;
      manifest["config"] = config_json(model.config);
      manifest["inputs"] = {{"checkpoint", an_ckpt}, {"cohort", an_cohort}};
      json artifacts = {{"samples", samples},
                        {"dcor", dcor},
                        {"pca_points", pca_paths.points},
                        {"pca_grid_edges", pca_paths.grid_edges},
                        {"pca_ref_arrows", pca_paths.ref_arrows}};
      artifacts["heatmaps"] = heatmaps;
      manifest["artifacts"] = artifacts;
      manifest["columns_flipped_for_display"] = analysis.columns_flipped;
      manifest["timings"] = {{"total_seconds", timer.seconds()}};
      write_manifest(an_out, manifest);
      for (const auto& row : dcor_rows) {
        std::cerr << "dcor(" << row.covariate << ") = " << row.dcor << " (n=" << row.n << ")\n";
      }
      std::cout << an_out << "\n";
      return 0;
    }

    if (probe->parsed()) {
      Timer timer;
      require_file(pr_ckpt, "checkpoint");
      require_file(pr_cohort, "cohort file");
      if (pr_task != "both" && pr_task != "classification" && pr_task != "regression") {
        throw std::runtime_error("unknown --task value: " + pr_task);
      }
      const lsor::LoadedModel model = lsor::load_checkpoint(pr_ckpt);
      const lsor::Cohort cohort = lsor::read_cohort_csv(pr_cohort);
      prepare_run_dir(pr_out, pr_force);

      const lsor::CohortAnalysis analysis =
          lsor::analyze_cohort(model.encoder, model.grid, cohort);
      const std::size_t d = model.grid.dim();
      auto latents = analysis.latents.values();

      std::vector<lsor::ProbeReportRow> rows;
      if (pr_task != "regression") {
        // sMCI vs pMCI on the latents of visits from those two groups
        std::vector<double> x, y;
        std::vector<std::uint64_t> ids;
        for (std::size_t i = 0; i < analysis.visits.size(); ++i) {
          const auto& v = analysis.visits[i];
          if (v.group != lsor::Group::sMCI && v.group != lsor::Group::pMCI) continue;
          x.insert(x.end(), latents.begin() + static_cast<std::ptrdiff_t>(i * d),
                   latents.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
          y.push_back(v.group == lsor::Group::pMCI ? 1.0 : 0.0);
          ids.push_back(v.subject_id);
        }
        if (y.empty()) throw std::runtime_error("cohort has no sMCI or pMCI subjects to probe");
        const auto cv = lsor::probe_cross_validate(x, d, y, ids, lsor::ProbeTask::Classification,
                                                   pr_folds, pr_seed);
        for (auto& row : lsor::probe_report_rows("smci_vs_pmci", cv)) rows.push_back(row);
      }
      if (pr_task != "classification") {
        std::vector<double> x, y;
        std::vector<std::uint64_t> ids;
        for (std::size_t i = 0; i < analysis.visits.size(); ++i) {
          const auto& v = analysis.visits[i];
          x.insert(x.end(), latents.begin() + static_cast<std::ptrdiff_t>(i * d),
                   latents.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
          y.push_back(v.cognitive_score);
          ids.push_back(v.subject_id);
        }
        const auto cv = lsor::probe_cross_validate(x, d, y, ids, lsor::ProbeTask::Regression,
                                                   pr_folds, pr_seed);
        for (auto& row : lsor::probe_report_rows("cognitive_score", cv)) rows.push_back(row);
      }
      const std::string metrics_path = pr_out + "/probe_metrics.csv";
      lsor::write_probe_csv(rows, metrics_path);

      json manifest;
      manifest["command"] = "probe";
      manifest["seed"] = pr_seed;
      manifest["config"] = config_json(model.config);
      manifest["inputs"] = {{"checkpoint", pr_ckpt}, {"cohort", pr_cohort}};
      manifest["artifacts"] = {{"probe_metrics", metrics_path}};
      manifest["timings"] = {{"total_seconds", timer.seconds()}};
      write_manifest(pr_out, manifest);
      std::cout << pr_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
