#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lsor/tensor.hpp"

namespace lsor {

// Reverse-mode tape. Operations record a node whenever any input requires a
// gradient; backward() replays the local rules in reverse order and
// accumulates into the inputs' grad buffers. One tape per training step,
// single-threaded.
class Tape {
 public:
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
  Tensor matmul(const Tensor& a, const Tensor& b);
  // x: n x m, bias: m. Adds the bias row to every row of x.
  Tensor add_rowvec(const Tensor& x, const Tensor& bias);
  // x: n x m, v: n. Scales row i of x by v[i].
  Tensor mul_colvec(const Tensor& x, const Tensor& v);
  Tensor leaky_relu(const Tensor& x, double slope);
  Tensor exp(const Tensor& x);
  Tensor softplus(const Tensor& x);  // log(1 + e^x), evaluated stably
  Tensor softmax(const Tensor& x);   // flat vector
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor squared_norm(const Tensor& x);  // sum of squares of all entries
  Tensor l1_norm(const Tensor& x);
  // Cosine of the angle between two flat vectors.
  Tensor cosine(const Tensor& a, const Tensor& b);
  // a, b: n x d. Row-wise cosine; rows with a vanishing norm yield 0 and
  // propagate no gradient.
  Tensor row_cosine(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double c);
  Tensor add_scalar(const Tensor& x, double c);
  // x: k x d, indices into the rows of x; output n x d. Backward scatter-adds.
  Tensor gather_rows(const Tensor& x, std::vector<std::size_t> indices);
  // a: n x d, b: k x d; output n x k of squared Euclidean distances.
  Tensor pairwise_sqdist(const Tensor& a, const Tensor& b);
  // Identity forward; contributes zero gradient to x on the backward pass.
  Tensor stop_gradient(const Tensor& x);

  // root must be scalar. Sets grad = d(root)/d(tensor) for every tensor
  // recorded on this tape; uses of a tensor in several branches accumulate.
  void backward(const Tensor& root);

  std::size_t num_nodes() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(Node&)> backward;
  };

  Tensor record(Shape shape, std::vector<double> values,
                std::vector<Tensor> inputs,
                std::function<void(Node&)> backward);

  std::vector<Node> nodes_;
};

}  // namespace lsor
