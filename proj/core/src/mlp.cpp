#include "lsor/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lsor {

Mlp::Mlp(std::vector<std::size_t> layer_dims, double leaky_slope, std::uint64_t seed)
    : layer_dims_(std::move(layer_dims)), leaky_slope_(leaky_slope) {
  if (layer_dims_.size() < 2) {
    throw std::invalid_argument("mlp: need at least input and output dims");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims_.size(); ++l) {
    const std::size_t fan_in = layer_dims_[l];
    const std::size_t fan_out = layer_dims_[l + 1];
    const double gain = std::sqrt(2.0 / (1.0 + leaky_slope_ * leaky_slope_));
    const double limit = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> w(fan_in * fan_out);
    for (double& v : w) v = dist(rng);
    weights_.emplace_back(Shape{fan_in, fan_out}, std::move(w), true);
    biases_.emplace_back(Tensor::zeros({fan_out}, true));
  }
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != input_dim()) {
    throw std::invalid_argument("mlp: input " + shape_str(x.shape()) + " does not match dim " +
                                std::to_string(input_dim()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = tape.add_rowvec(tape.matmul(h, weights_[l]), biases_[l]);
    if (l + 1 < weights_.size()) h = tape.leaky_relu(h, leaky_slope_);
  }
  return h;
}

std::vector<std::pair<std::string, Tensor>> Mlp::named_params(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), weights_[l]);
    out.emplace_back(prefix + ".b" + std::to_string(l), biases_[l]);
  }
  return out;
}

namespace {

Tensor batch_mean_sq_residual(Tape& tape, const Tensor& x, const Tensor& recon) {
  const double inv_n = 1.0 / static_cast<double>(x.dim(0));
  return tape.scale(tape.squared_norm(tape.sub(x, recon)), inv_n);
}

}  // namespace

Tensor recon_loss(Tape& tape, const Tensor& x_u, const Tensor& x_v, const Tensor& z_u,
                  const Tensor& z_v, const Tensor& g_eps_u, const Tensor& g_eps_v,
                  const Mlp& decoder) {
  Tensor lu = batch_mean_sq_residual(tape, x_u, decoder.forward(tape, z_u));
  Tensor lug = batch_mean_sq_residual(tape, x_u, decoder.forward(tape, g_eps_u));
  Tensor lv = batch_mean_sq_residual(tape, x_v, decoder.forward(tape, z_v));
  Tensor lvg = batch_mean_sq_residual(tape, x_v, decoder.forward(tape, g_eps_v));
  return tape.add(tape.add(lu, lug), tape.add(lv, lvg));
}

Tensor recon_loss_z_only(Tape& tape, const Tensor& x_u, const Tensor& x_v, const Tensor& z_u,
                         const Tensor& z_v, const Mlp& decoder) {
  Tensor lu = batch_mean_sq_residual(tape, x_u, decoder.forward(tape, z_u));
  Tensor lv = batch_mean_sq_residual(tape, x_v, decoder.forward(tape, z_v));
  return tape.add(lu, lv);
}

}  // namespace lsor
