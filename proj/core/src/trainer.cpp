#include "lsor/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lsor {

namespace {

TrainConfig validated(TrainConfig config) {
  config.validate();
  return config;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::vector<std::size_t> encoder_dims(std::size_t input_dim, const TrainConfig& config) {
  std::vector<std::size_t> dims{input_dim};
  for (int h : config.hidden_dims) dims.push_back(static_cast<std::size_t>(h));
  dims.push_back(static_cast<std::size_t>(config.latent_dim));
  return dims;
}

std::vector<std::size_t> decoder_dims(std::size_t input_dim, const TrainConfig& config) {
  std::vector<std::size_t> dims{static_cast<std::size_t>(config.latent_dim)};
  for (auto it = config.hidden_dims.rbegin(); it != config.hidden_dims.rend(); ++it) {
    dims.push_back(static_cast<std::size_t>(*it));
  }
  dims.push_back(input_dim);
  return dims;
}

void check_finite(double v, const char* component, int iteration) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string("training aborted: ") + component +
                             " loss became non-finite at iteration " + std::to_string(iteration));
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda_commit < 0 || lambda_som < 0 || lambda_dir < 0) {
    throw std::invalid_argument("config: loss weights must be nonnegative");
  }
  if (learning_rate <= 0) throw std::invalid_argument("config: learning_rate must be positive");
  if (ema_alpha <= 0 || ema_alpha >= 1) {
    throw std::invalid_argument("config: ema_alpha must lie in (0, 1)");
  }
  if (tau_min <= 0 || tau_max < tau_min) {
    throw std::invalid_argument("config: need 0 < tau_min <= tau_max");
  }
  if (grid_rows < 1 || grid_cols < 1 || latent_dim < 1) {
    throw std::invalid_argument("config: grid and latent dims must be positive");
  }
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be positive");
  if (pretrain_epochs < 0 || train_epochs < 0) {
    throw std::invalid_argument("config: epoch counts must be nonnegative");
  }
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("config: hidden dims must be positive");
  }
}

TrainConfig config_from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.contains("config") && j["config"].is_object()) j = j["config"];  // manifest
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("lambda_commit", c.lambda_commit);
  get("lambda_som", c.lambda_som);
  get("lambda_dir", c.lambda_dir);
  get("learning_rate", c.learning_rate);
  get("weight_decay", c.weight_decay);
  get("pretrain_epochs", c.pretrain_epochs);
  get("train_epochs", c.train_epochs);
  get("batch_size", c.batch_size);
  get("ema_alpha", c.ema_alpha);
  get("tau_min", c.tau_min);
  get("tau_max", c.tau_max);
  get("grid_rows", c.grid_rows);
  get("grid_cols", c.grid_cols);
  get("seed", c.seed);
  get("latent_dim", c.latent_dim);
  get("hidden_dims", c.hidden_dims);
  get("leaky_slope", c.leaky_slope);
  get("checkpoint_every", c.checkpoint_every);
  get("hard_som", c.hard_som);
  get("recon_g_terms", c.recon_g_terms);
  for (auto& [key, value] : j.items()) {
    static const char* known[] = {
        "lambda_commit", "lambda_som",  "lambda_dir", "learning_rate", "weight_decay",
        "pretrain_epochs", "train_epochs", "batch_size", "ema_alpha", "tau_min",
        "tau_max", "grid_rows", "grid_cols", "seed", "latent_dim",
        "hidden_dims", "leaky_slope", "checkpoint_every", "hard_som", "recon_g_terms"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument("config: unknown field '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

std::string config_to_json_text(const TrainConfig& c) {
  nlohmann::json j;
  j["lambda_commit"] = c.lambda_commit;
  j["lambda_som"] = c.lambda_som;
  j["lambda_dir"] = c.lambda_dir;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["train_epochs"] = c.train_epochs;
  j["batch_size"] = c.batch_size;
  j["ema_alpha"] = c.ema_alpha;
  j["tau_min"] = c.tau_min;
  j["tau_max"] = c.tau_max;
  j["grid_rows"] = c.grid_rows;
  j["grid_cols"] = c.grid_cols;
  j["seed"] = c.seed;
  j["latent_dim"] = c.latent_dim;
  j["hidden_dims"] = c.hidden_dims;
  j["leaky_slope"] = c.leaky_slope;
  j["checkpoint_every"] = c.checkpoint_every;
  j["hard_som"] = c.hard_som;
  j["recon_g_terms"] = c.recon_g_terms;
  return j.dump(2);
}

void write_metrics_csv(const std::vector<EpochRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path);
  out << "epoch,recon,commit,som,dir,total,tau,uninit_cells,excluded_dir_samples\n";
  for (const auto& r : rows) {
    out << r.epoch << "," << fmt(r.recon) << "," << fmt(r.commit) << "," << fmt(r.som) << ","
        << fmt(r.dir) << "," << fmt(r.total) << "," << fmt(r.tau) << "," << r.uninit_cells << ","
        << r.excluded_dir_samples << "\n";
  }
}

TotalLossResult total_loss(Tape& tape, const PairBatch& batch, const Mlp& encoder,
                           const Mlp& decoder, const SomGrid& grid,
                           const ReferenceTrajectories& refs, const TrainConfig& config,
                           const TauSchedule& schedule, std::int64_t t) {
  Tensor z_u = encoder.forward(tape, batch.x_u);
  Tensor z_v = encoder.forward(tape, batch.x_v);
  const auto eps_u = nearest_batch(grid, z_u);
  const auto eps_v = nearest_batch(grid, z_v);

  const double tau = tau_at(schedule, grid, t);
  std::vector<std::vector<double>> wu, wv;
  wu.reserve(batch.size());
  wv.reserve(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    if (config.hard_som) {
      wu.push_back(hard_weights(eps_u[k], grid.rows(), grid.cols()));
      wv.push_back(hard_weights(eps_v[k], grid.rows(), grid.cols()));
    } else {
      wu.push_back(soft_weights(eps_u[k], grid.rows(), grid.cols(), tau));
      wv.push_back(soft_weights(eps_v[k], grid.rows(), grid.cols(), tau));
    }
  }
  Tensor w_u = stack_weights(wu, grid.cells());
  Tensor w_v = stack_weights(wv, grid.cells());

  std::vector<std::size_t> lin_u(batch.size()), lin_v(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    lin_u[k] = grid.linear(eps_u[k]);
    lin_v[k] = grid.linear(eps_v[k]);
  }
  Tensor reps = grid.representations();
  Tensor g_u = tape.gather_rows(reps, lin_u);
  Tensor g_v = tape.gather_rows(reps, lin_v);

  Tensor recon = config.recon_g_terms
                     ? recon_loss(tape, batch.x_u, batch.x_v, z_u, z_v, g_u, g_v, decoder)
                     : recon_loss_z_only(tape, batch.x_u, batch.x_v, z_u, z_v, decoder);
  Tensor commit = commit_loss(tape, z_u, z_v, g_u, g_v);
  Tensor som = som_loss(tape, grid, z_u, z_v, w_u, w_v);
  Tensor dz = trajectory_batch(tape, z_u, z_v, batch.delta_t);
  DirectionLossResult dir = direction_loss(tape, dz, refs, eps_u);

  Tensor total = recon;
  if (config.lambda_commit != 0.0) total = tape.add(total, tape.scale(commit, config.lambda_commit));
  if (config.lambda_som != 0.0) total = tape.add(total, tape.scale(som, config.lambda_som));
  if (config.lambda_dir != 0.0 && dir.included > 0) {
    total = tape.add(total, tape.scale(dir.loss, config.lambda_dir));
  }

  TotalLossResult result;
  result.loss = total;
  result.breakdown.recon = recon.value();
  result.breakdown.commit = commit.value();
  result.breakdown.som = som.value();
  result.breakdown.dir = dir.loss.value();
  result.breakdown.total = total.value();
  result.breakdown.tau = tau;
  result.breakdown.uninit_cells = refs.uninitialized_count();
  result.breakdown.excluded_dir_samples = dir.excluded;
  result.trajectory_stats =
      accumulate_trajectories(eps_u, dz.values(), grid.dim(), grid.rows(), grid.cols());
  return result;
}

Trainer::Trainer(const Cohort& cohort, TrainConfig config)
    : cohort_(&cohort),
      config_(validated(std::move(config))),
      encoder_(encoder_dims(cohort.input_dim, config_), config_.leaky_slope,
               derive_seed(config_.seed, 1)),
      decoder_(decoder_dims(cohort.input_dim, config_), config_.leaky_slope,
               derive_seed(config_.seed, 2)),
      grid_(static_cast<std::size_t>(config_.grid_rows), static_cast<std::size_t>(config_.grid_cols),
            static_cast<std::size_t>(config_.latent_dim)),
      refs_(grid_.rows(), grid_.cols(), grid_.dim()),
      sampler_(cohort, static_cast<std::size_t>(config_.batch_size), derive_seed(config_.seed, 3)) {
  schedule_ = TauSchedule{config_.tau_min, config_.tau_max, 1};
}

Tensor Trainer::encode_all_visits() const {
  const std::size_t m = cohort_->input_dim;
  std::vector<double> x;
  x.reserve(cohort_->total_visits() * m);
  for (const auto& subject : cohort_->subjects) {
    for (const auto& visit : subject.visits) {
      x.insert(x.end(), visit.observation.begin(), visit.observation.end());
    }
  }
  const std::size_t n = x.size() / m;
  Tape tape;
  Tensor z = encoder_.forward(tape, Tensor({n, m}, std::move(x), false));
  std::vector<double> values(z.values().begin(), z.values().end());
  return Tensor(z.shape(), std::move(values), false);
}

std::vector<double> Trainer::pretrain() {
  AdamOptimizer opt(AdamConfig{config_.learning_rate, 0.9, 0.999, 1e-8, config_.weight_decay});
  opt.add_params(encoder_.named_params("encoder"));
  opt.add_params(decoder_.named_params("decoder"));

  std::vector<double> epoch_means;
  const std::size_t batches = sampler_.batches_per_epoch();
  int iteration = 0;
  for (int epoch = 0; epoch < config_.pretrain_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      PairBatch batch = sampler_.next();
      Tape tape;
      Tensor z_u = encoder_.forward(tape, batch.x_u);
      Tensor z_v = encoder_.forward(tape, batch.x_v);
      Tensor loss = recon_loss_z_only(tape, batch.x_u, batch.x_v, z_u, z_v, decoder_);
      check_finite(loss.value(), "reconstruction", iteration);
      tape.backward(loss);
      opt.step();
      total += loss.value();
      ++iteration;
    }
    epoch_means.push_back(total / static_cast<double>(batches));
  }

  // k-means over the latents of every training visit seeds the SOM grid.
  Tensor latents = encode_all_visits();
  auto centers = kmeans(latents.values(), latents.dim(0), grid_.dim(), grid_.cells(),
                        derive_seed(config_.seed, 4));
  grid_.load_representations(centers);
  pretrained_ = true;
  return epoch_means;
}

std::vector<EpochRow> Trainer::train(const std::function<void(int, const EpochRow&)>& on_epoch) {
  if (!pretrained_) throw std::logic_error("train: pretrain() must run first");
  const std::size_t batches = sampler_.batches_per_epoch();
  schedule_.total_iterations = static_cast<std::size_t>(config_.train_epochs) * batches;
  if (schedule_.total_iterations == 0) return {};

  const bool grid_participates =
      config_.recon_g_terms || config_.lambda_commit != 0.0 || config_.lambda_som != 0.0;
  AdamOptimizer opt(AdamConfig{config_.learning_rate, 0.9, 0.999, 1e-8, config_.weight_decay});
  opt.add_params(encoder_.named_params("encoder"));
  opt.add_params(decoder_.named_params("decoder"));
  if (grid_participates) opt.add_param("som.representations", grid_.representations());

  std::vector<EpochRow> rows;
  std::int64_t t = 0;
  for (int epoch = 1; epoch <= config_.train_epochs; ++epoch) {
    EpochRow row;
    row.epoch = epoch;
    for (std::size_t b = 0; b < batches; ++b) {
      PairBatch batch = sampler_.next();
      Tape tape;
      TotalLossResult res =
          total_loss(tape, batch, encoder_, decoder_, grid_, refs_, config_, schedule_, t);
      check_finite(res.breakdown.recon, "reconstruction", static_cast<int>(t));
      check_finite(res.breakdown.commit, "commitment", static_cast<int>(t));
      check_finite(res.breakdown.som, "som", static_cast<int>(t));
      check_finite(res.breakdown.dir, "direction", static_cast<int>(t));
      check_finite(res.breakdown.total, "total", static_cast<int>(t));
      tape.backward(res.loss);
      opt.step();
      // EMA second: the references see this iteration's pre-step trajectories.
      ema_update(refs_, res.trajectory_stats, config_.ema_alpha, static_cast<std::uint64_t>(t));
      row.recon += res.breakdown.recon;
      row.commit += res.breakdown.commit;
      row.som += res.breakdown.som;
      row.dir += res.breakdown.dir;
      row.total += res.breakdown.total;
      row.tau += res.breakdown.tau;
      row.excluded_dir_samples += res.breakdown.excluded_dir_samples;
      ++t;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    row.recon *= inv;
    row.commit *= inv;
    row.som *= inv;
    row.dir *= inv;
    row.total *= inv;
    row.tau *= inv;
    row.uninit_cells = refs_.uninitialized_count();
    rows.push_back(row);
    if (on_epoch) on_epoch(epoch, row);
  }
  return rows;
}

void Trainer::save_checkpoint(const std::string& path) const {
  lsor::save_checkpoint(path, config_, encoder_, decoder_, grid_, refs_);
}

TrainOutcome run_training(Trainer& trainer) {
  TrainOutcome outcome;
  outcome.pretrain_recon = trainer.pretrain();
  outcome.epochs = trainer.train();
  return outcome;
}

namespace {

constexpr char kMagic[8] = {'L', 'S', 'O', 'R', 'C', 'K', 'P', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_doubles(std::ofstream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::span<double> v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void write_mlp(std::ofstream& out, const Mlp& mlp) {
  write_u64(out, mlp.layer_dims().size());
  for (std::size_t d : mlp.layer_dims()) write_u64(out, d);
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    write_doubles(out, mlp.weight(l).values());
    write_doubles(out, mlp.bias(l).values());
  }
}

Mlp read_mlp(std::ifstream& in, double leaky_slope) {
  const std::uint64_t n_dims = read_u64(in);
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) d = read_u64(in);
  Mlp mlp(dims, leaky_slope, 0);
  for (std::size_t l = 0; l < mlp.num_layers(); ++l) {
    read_doubles(in, mlp.weight(l).values_mut());
    read_doubles(in, mlp.bias(l).values_mut());
  }
  return mlp;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& config, const Mlp& encoder,
                     const Mlp& decoder, const SomGrid& grid, const ReferenceTrajectories& refs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::string cfg = config_to_json_text(config);
  write_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_mlp(out, encoder);
  write_mlp(out, decoder);
  write_u64(out, grid.rows());
  write_u64(out, grid.cols());
  write_u64(out, grid.dim());
  write_doubles(out, grid.representations().values());
  write_doubles(out, refs.raw());
  out.write(reinterpret_cast<const char*>(refs.flags().data()),
            static_cast<std::streamsize>(refs.flags().size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  const std::uint64_t cfg_len = read_u64(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  LoadedModel model;
  model.config = config_from_json_text(cfg);
  model.encoder = read_mlp(in, model.config.leaky_slope);
  model.decoder = read_mlp(in, model.config.leaky_slope);
  const std::uint64_t rows = read_u64(in);
  const std::uint64_t cols = read_u64(in);
  const std::uint64_t dim = read_u64(in);
  model.grid = SomGrid(rows, cols, dim);
  std::vector<double> reps(rows * cols * dim);
  read_doubles(in, reps);
  model.grid.load_representations(reps);
  model.refs = ReferenceTrajectories(rows, cols, dim);
  std::vector<double> ref_values(rows * cols * dim);
  read_doubles(in, ref_values);
  std::vector<std::uint8_t> flags(rows * cols);
  in.read(reinterpret_cast<char*>(flags.data()), static_cast<std::streamsize>(flags.size()));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  model.refs.load(ref_values, flags);
  return model;
}

}  // namespace lsor
