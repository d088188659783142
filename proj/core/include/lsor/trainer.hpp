#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lsor/adam.hpp"
#include "lsor/longitudinal.hpp"
#include "lsor/mlp.hpp"
#include "lsor/som.hpp"
#include "lsor/synthdata.hpp"

namespace lsor {

struct TrainConfig {
  double lambda_commit = 0.5;
  double lambda_som = 1.0;
  double lambda_dir = 0.2;
  double learning_rate = 5e-4;
  double weight_decay = 1e-5;
  int pretrain_epochs = 10;
  int train_epochs = 40;
  int batch_size = 64;
  double ema_alpha = 0.99;
  double tau_min = 0.1;
  double tau_max = 1.0;
  int grid_rows = 4;
  int grid_cols = 8;
  std::uint64_t seed = 7;
  int latent_dim = 64;
  std::vector<int> hidden_dims{64, 64};
  double leaky_slope = 0.2;
  int checkpoint_every = 10;  // epochs; 0 disables intermediate checkpoints
  bool hard_som = false;      // hard-assignment ablation of the soft scheme
  bool recon_g_terms = true;  // include the |x - H(g_eps)|^2 terms of the recon loss

  void validate() const;
};

// JSON round-trip; field names match the struct members. load accepts either
// a bare config object or a run manifest with a "config" section.
TrainConfig config_from_json_text(const std::string& text);
TrainConfig config_from_json_file(const std::string& path);
std::string config_to_json_text(const TrainConfig& config);

struct LossBreakdown {
  double recon = 0.0;
  double commit = 0.0;
  double som = 0.0;
  double dir = 0.0;
  double total = 0.0;
  double tau = 0.0;
  std::size_t uninit_cells = 0;
  std::size_t excluded_dir_samples = 0;
};

struct EpochRow {
  int epoch = 0;
  double recon = 0.0, commit = 0.0, som = 0.0, dir = 0.0, total = 0.0, tau = 0.0;
  std::size_t uninit_cells = 0;
  std::size_t excluded_dir_samples = 0;
};

void write_metrics_csv(const std::vector<EpochRow>& rows, const std::string& path);

// The complete objective on one tape:
//   L = L_recon + lambda_commit L_commit + lambda_som L_som + lambda_dir L_dir
// with soft weights at tau(t). Also returns the detached trajectory stats the
// EMA update consumes afterwards.
struct TotalLossResult {
  Tensor loss;
  LossBreakdown breakdown;
  BatchTrajectoryStats trajectory_stats;
};

TotalLossResult total_loss(Tape& tape, const PairBatch& batch, const Mlp& encoder,
                           const Mlp& decoder, const SomGrid& grid,
                           const ReferenceTrajectories& refs, const TrainConfig& config,
                           const TauSchedule& schedule, std::int64_t t);

// Two-phase trainer: reconstruction-only pretraining with k-means SOM
// initialization, then the full objective with per-iteration EMA updates.
class Trainer {
 public:
  Trainer(const Cohort& cohort, TrainConfig config);

  // Adam over encoder/decoder on the latent reconstruction terms only, then
  // k-means over all training latents seeds the SOM grid. Returns per-epoch
  // mean reconstruction losses (empty for zero epochs).
  std::vector<double> pretrain();

  // Full objective; requires pretrain() first. Returns per-epoch metric rows;
  // on_epoch (when set) runs after each epoch, e.g. for periodic checkpoints.
  std::vector<EpochRow> train(const std::function<void(int, const EpochRow&)>& on_epoch = {});

  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }
  const SomGrid& grid() const { return grid_; }
  const ReferenceTrajectories& refs() const { return refs_; }
  const TrainConfig& config() const { return config_; }
  const TauSchedule& schedule() const { return schedule_; }

  // Encodes every visit of the cohort (row per visit, cohort order).
  Tensor encode_all_visits() const;

  void save_checkpoint(const std::string& path) const;

 private:
  const Cohort* cohort_;
  TrainConfig config_;
  Mlp encoder_, decoder_;
  SomGrid grid_;
  ReferenceTrajectories refs_;
  PairSampler sampler_;
  TauSchedule schedule_;
  bool pretrained_ = false;
};

struct LoadedModel {
  TrainConfig config;
  Mlp encoder, decoder;
  SomGrid grid;
  ReferenceTrajectories refs;
};

void save_checkpoint(const std::string& path, const TrainConfig& config, const Mlp& encoder,
                     const Mlp& decoder, const SomGrid& grid, const ReferenceTrajectories& refs);
LoadedModel load_checkpoint(const std::string& path);

// Convenience: full pretrain + train pipeline.
struct TrainOutcome {
  std::vector<double> pretrain_recon;
  std::vector<EpochRow> epochs;
};
TrainOutcome run_training(Trainer& trainer);

}  // namespace lsor
