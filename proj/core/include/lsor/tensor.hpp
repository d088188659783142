#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lsor {

// Shapes are row-major; a rank-0 shape denotes a scalar (one element).
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty = absent
  bool requires_grad = false;
};
}  // namespace detail

// Dense tensor of doubles. Copying a Tensor copies the handle, not the
// buffer, so parameters can be shared between a model and an optimizer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  std::size_t ndim() const { return data_->shape.size(); }
  std::size_t size() const { return data_->values.size(); }
  std::size_t dim(std::size_t i) const { return data_->shape.at(i); }

  std::span<const double> values() const { return data_->values; }
  std::span<double> values_mut() { return data_->values; }
  double value() const;  // scalar access; throws unless size() == 1
  double at(std::size_t i) const { return data_->values[i]; }

  bool requires_grad() const { return data_->requires_grad; }
  bool has_grad() const { return !data_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void ensure_grad();  // allocate zero grad buffer if absent
  void zero_grad();    // allocate if absent, then fill with zeros
  void clear_grad();   // drop the grad buffer

  // Identity of the underlying buffer; used by the tape and optimizer.
  const void* id() const { return data_.get(); }

 private:
  std::shared_ptr<detail::TensorData> data_;
};

}  // namespace lsor
