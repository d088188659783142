#include "lsor/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace lsor {

void AdamOptimizer::add_param(std::string name, Tensor param) {
  if (!param.defined() || !param.requires_grad()) {
    throw std::invalid_argument("adam: parameter '" + name + "' does not require gradients");
  }
  Slot slot;
  slot.name = std::move(name);
  slot.param = std::move(param);
  slot.m.assign(slot.param.size(), 0.0);
  slot.v.assign(slot.param.size(), 0.0);
  slots_.push_back(std::move(slot));
}

void AdamOptimizer::add_params(const std::vector<std::pair<std::string, Tensor>>& params) {
  for (const auto& [name, tensor] : params) add_param(name, tensor);
}

void AdamOptimizer::step() {
  for (const Slot& slot : slots_) {
    if (!slot.param.has_grad()) {
      throw std::runtime_error("adam: missing gradient for parameter '" + slot.name + "'");
    }
  }
  t_ += 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (Slot& slot : slots_) {
    auto g = slot.param.grad();
    auto theta = slot.param.values_mut();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g[i];
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = slot.m[i] / bc1;
      const double v_hat = slot.v[i] / bc2;
      theta[i] -= config_.learning_rate * config_.weight_decay * theta[i];
      theta[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    slot.param.clear_grad();
  }
}

}  // namespace lsor
