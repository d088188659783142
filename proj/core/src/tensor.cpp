#include "lsor/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace lsor {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  data_ = std::make_shared<detail::TensorData>();
  data_->shape = std::move(shape);
  data_->values = std::move(values);
  data_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: value() on non-scalar of shape " + shape_str(shape()));
  }
  return data_->values[0];
}

std::span<const double> Tensor::grad() const {
  if (data_->grad.empty()) {
    throw std::runtime_error("tensor: gradient absent");
  }
  return data_->grad;
}

std::span<double> Tensor::grad_mut() {
  ensure_grad();
  return data_->grad;
}

void Tensor::ensure_grad() {
  if (data_->grad.empty()) data_->grad.assign(data_->values.size(), 0.0);
}

void Tensor::zero_grad() {
  data_->grad.assign(data_->values.size(), 0.0);
}

void Tensor::clear_grad() {
  data_->grad.clear();
}

}  // namespace lsor
