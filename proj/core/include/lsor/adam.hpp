#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsor/tensor.hpp"

namespace lsor {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-5;  // decoupled: subtracts lr * wd * param
};

// Bias-corrected Adam with decoupled weight decay. Moments are kept per
// registered parameter; step() consumes and clears the gradients.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  void add_param(std::string name, Tensor param);
  void add_params(const std::vector<std::pair<std::string, Tensor>>& params);

  // Applies one update. Every parameter must carry a gradient; a missing
  // gradient raises an error naming the parameter.
  void step();

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  std::size_t num_params() const { return slots_.size(); }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamConfig config_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

}  // namespace lsor
