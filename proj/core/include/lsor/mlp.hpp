#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lsor/autodiff.hpp"
#include "lsor/tensor.hpp"

namespace lsor {

// Fully connected network with a leaky-rectifier between layers and a linear
// head. Weights are He-uniform initialized from the given seed.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> layer_dims, double leaky_slope, std::uint64_t seed);

  // x: batch x input_dim -> batch x output_dim
  Tensor forward(Tape& tape, const Tensor& x) const;

  const std::vector<std::size_t>& layer_dims() const { return layer_dims_; }
  std::size_t input_dim() const { return layer_dims_.front(); }
  std::size_t output_dim() const { return layer_dims_.back(); }
  double leaky_slope() const { return leaky_slope_; }
  std::size_t num_layers() const { return weights_.size(); }
  Tensor weight(std::size_t layer) const { return weights_.at(layer); }
  Tensor bias(std::size_t layer) const { return biases_.at(layer); }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;

 private:
  std::vector<std::size_t> layer_dims_;
  double leaky_slope_ = 0.2;
  std::vector<Tensor> weights_;  // layer_dims[l] x layer_dims[l+1]
  std::vector<Tensor> biases_;   // layer_dims[l+1]
};

// Mean over the batch of
//   |x_u - H(z_u)|^2 + |x_u - H(g_eps_u)|^2 + |x_v - H(z_v)|^2 + |x_v - H(g_eps_v)|^2.
// g_eps_* are the nearest SOM representations gathered on the tape, so the
// decoder and the gathered representations both receive gradients.
Tensor recon_loss(Tape& tape, const Tensor& x_u, const Tensor& x_v, const Tensor& z_u,
                  const Tensor& z_v, const Tensor& g_eps_u, const Tensor& g_eps_v,
                  const Mlp& decoder);

// Pretraining variant: only the latent reconstruction terms (the SOM grid
// does not exist yet).
Tensor recon_loss_z_only(Tape& tape, const Tensor& x_u, const Tensor& x_v, const Tensor& z_u,
                         const Tensor& z_v, const Mlp& decoder);

}  // namespace lsor
