#include "lsor/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace lsor {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor Tape::record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                    std::function<void(Node&)> backward) {
  bool rg = any_requires_grad(inputs);
  Tensor out(std::move(shape), std::move(values), rg);
  if (rg) {
    nodes_.push_back(Node{std::move(inputs), out, std::move(backward)});
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return record(a.shape(), std::move(out), {a, b}, [](Node& n) {
    auto g = n.output.grad();
    for (int k = 0; k < 2; ++k) {
      if (!n.inputs[k].requires_grad()) continue;
      auto dst = n.inputs[k].grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return record(a.shape(), std::move(out), {a, b}, [](Node& n) {
    auto g = n.output.grad();
    if (n.inputs[0].requires_grad()) {
      auto da = n.inputs[0].grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (n.inputs[1].requires_grad()) {
      auto db = n.inputs[1].grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return record(a.shape(), std::move(out), {a, b}, [](Node& n) {
    auto g = n.output.grad();
    const Tensor& a = n.inputs[0];
    const Tensor& b = n.inputs[1];
    if (n.inputs[0].requires_grad()) {
      auto da = n.inputs[0].grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b.at(i);
    }
    if (n.inputs[1].requires_grad()) {
      auto db = n.inputs[1].grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a.at(i);
    }
  });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
    }
  }
  return record({n, m}, std::move(out), {a, b}, [n, k, m](Node& nd) {
    auto g = nd.output.grad();
    const Tensor& a = nd.inputs[0];
    const Tensor& b = nd.inputs[1];
    if (a.requires_grad()) {
      // dA = G * B^T
      auto da = nd.inputs[0].grad_mut();
      auto bv = b.values();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = g[i * m + j];
          for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gij * bv[p * m + j];
        }
      }
    }
    if (b.requires_grad()) {
      // dB = A^T * G
      auto db = nd.inputs[1].grad_mut();
      auto av = a.values();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < m; ++j) db[p * m + j] += aip * g[i * m + j];
        }
      }
    }
  });
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 2 || bias.size() != x.dim(1)) {
    throw std::invalid_argument("add_rowvec: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(bias.shape()));
  }
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.at(i * m + j) + bias.at(j);
  return record(x.shape(), std::move(out), {x, bias}, [n, m](Node& nd) {
    auto g = nd.output.grad();
    if (nd.inputs[0].requires_grad()) {
      auto dx = nd.inputs[0].grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
    if (nd.inputs[1].requires_grad()) {
      auto db = nd.inputs[1].grad_mut();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) db[j] += g[i * m + j];
    }
  });
}

Tensor Tape::mul_colvec(const Tensor& x, const Tensor& v) {
  if (x.ndim() != 2 || v.size() != x.dim(0)) {
    throw std::invalid_argument("mul_colvec: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(v.shape()));
  }
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.at(i * m + j) * v.at(i);
  return record(x.shape(), std::move(out), {x, v}, [n, m](Node& nd) {
    auto g = nd.output.grad();
    const Tensor& x = nd.inputs[0];
    const Tensor& v = nd.inputs[1];
    if (x.requires_grad()) {
      auto dx = nd.inputs[0].grad_mut();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) dx[i * m + j] += g[i * m + j] * v.at(i);
    }
    if (v.requires_grad()) {
      auto dv = nd.inputs[1].grad_mut();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) dv[i] += g[i * m + j] * x.at(i * m + j);
    }
  });
}

Tensor Tape::leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.at(i);
    out[i] = v > 0.0 ? v : slope * v;
  }
  return record(x.shape(), std::move(out), {x}, [slope](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    auto g = nd.output.grad();
    auto dx = nd.inputs[0].grad_mut();
    const Tensor& x = nd.inputs[0];
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (x.at(i) > 0.0 ? 1.0 : slope);
  });
}

Tensor Tape::exp(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.at(i));
  return record(x.shape(), std::move(out), {x}, [](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    auto g = nd.output.grad();
    auto dx = nd.inputs[0].grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * nd.output.at(i);
  });
}

Tensor Tape::softplus(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.at(i);
    out[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  }
  return record(x.shape(), std::move(out), {x}, [](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    auto g = nd.output.grad();
    auto dx = nd.inputs[0].grad_mut();
    const Tensor& x = nd.inputs[0];
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * stable_sigmoid(x.at(i));
  });
}

Tensor Tape::softmax(const Tensor& x) {
  double mx = x.at(0);
  for (std::size_t i = 1; i < x.size(); ++i) mx = std::max(mx, x.at(i));
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x.at(i) - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return record(x.shape(), std::move(out), {x}, [](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    auto g = nd.output.grad();
    auto dx = nd.inputs[0].grad_mut();
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * nd.output.at(i);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += nd.output.at(i) * (g[i] - dot);
  });
}

Tensor Tape::sum(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i);
  return record({}, {s}, {x}, [](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const double g = nd.output.grad()[0];
    auto dx = nd.inputs[0].grad_mut();
    for (double& v : dx) v += g;
  });
}

Tensor Tape::mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i);
  const double inv = 1.0 / static_cast<double>(x.size());
  return record({}, {s * inv}, {x}, [inv](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const double g = nd.output.grad()[0] * inv;
    auto dx = nd.inputs[0].grad_mut();
    for (double& v : dx) v += g;
  });
}

Tensor Tape::squared_norm(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i) * x.at(i);
  return record({}, {s}, {x}, [](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const double g = nd.output.grad()[0];
    auto dx = nd.inputs[0].grad_mut();
    const Tensor& x = nd.inputs[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * 2.0 * x.at(i);
  });
}

Tensor Tape::l1_norm(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x.at(i));
  return record({}, {s}, {x}, [](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    const double g = nd.output.grad()[0];
    auto dx = nd.inputs[0].grad_mut();
    const Tensor& x = nd.inputs[0];
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double v = x.at(i);
      dx[i] += g * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
}

Tensor Tape::cosine(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a.at(i) * b.at(i);
    na2 += a.at(i) * a.at(i);
    nb2 += b.at(i) * b.at(i);
  }
  const double na = std::sqrt(na2), nb = std::sqrt(nb2);
  const double denom = na * nb;
  const double c = denom > 0.0 ? dot / denom : 0.0;
  return record({}, {c}, {a, b}, [c, na, nb](Node& nd) {
    if (na * nb <= 0.0) return;  // undefined angle: no gradient
    const double g = nd.output.grad()[0];
    const Tensor& a = nd.inputs[0];
    const Tensor& b = nd.inputs[1];
    if (a.requires_grad()) {
      auto da = nd.inputs[0].grad_mut();
      for (std::size_t i = 0; i < da.size(); ++i)
        da[i] += g * (b.at(i) / (na * nb) - c * a.at(i) / (na * na));
    }
    if (b.requires_grad()) {
      auto db = nd.inputs[1].grad_mut();
      for (std::size_t i = 0; i < db.size(); ++i)
        db[i] += g * (a.at(i) / (na * nb) - c * b.at(i) / (nb * nb));
    }
  });
}

Tensor Tape::row_cosine(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || a.shape() != b.shape()) {
    throw std::invalid_argument("row_cosine: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), d = a.dim(1);
  std::vector<double> out(n), nas(n), nbs(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += a.at(i * d + j) * b.at(i * d + j);
      na2 += a.at(i * d + j) * a.at(i * d + j);
      nb2 += b.at(i * d + j) * b.at(i * d + j);
    }
    nas[i] = std::sqrt(na2);
    nbs[i] = std::sqrt(nb2);
    out[i] = nas[i] * nbs[i] > 0.0 ? dot / (nas[i] * nbs[i]) : 0.0;
  }
  return record({n}, std::move(out), {a, b}, [n, d, nas, nbs](Node& nd) {
    auto g = nd.output.grad();
    const Tensor& a = nd.inputs[0];
    const Tensor& b = nd.inputs[1];
    for (std::size_t i = 0; i < n; ++i) {
      if (g[i] == 0.0 || nas[i] * nbs[i] <= 0.0) continue;
      const double c = nd.output.at(i);
      if (a.requires_grad()) {
        auto da = nd.inputs[0].grad_mut();
        for (std::size_t j = 0; j < d; ++j)
          da[i * d + j] +=
              g[i] * (b.at(i * d + j) / (nas[i] * nbs[i]) - c * a.at(i * d + j) / (nas[i] * nas[i]));
      }
      if (b.requires_grad()) {
        auto db = nd.inputs[1].grad_mut();
        for (std::size_t j = 0; j < d; ++j)
          db[i * d + j] +=
              g[i] * (a.at(i * d + j) / (nas[i] * nbs[i]) - c * b.at(i * d + j) / (nbs[i] * nbs[i]));
      }
    }
  });
}

Tensor Tape::scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x.at(i);
  return record(x.shape(), std::move(out), {x}, [c](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    auto g = nd.output.grad();
    auto dx = nd.inputs[0].grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
  });
}

Tensor Tape::add_scalar(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) + c;
  return record(x.shape(), std::move(out), {x}, [](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    auto g = nd.output.grad();
    auto dx = nd.inputs[0].grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Tensor Tape::gather_rows(const Tensor& x, std::vector<std::size_t> indices) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("gather_rows: expected matrix, got " + shape_str(x.shape()));
  }
  const std::size_t d = x.dim(1);
  for (std::size_t idx : indices) {
    if (idx >= x.dim(0)) throw std::invalid_argument("gather_rows: row index out of range");
  }
  const std::size_t n = indices.size();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.at(indices[i] * d + j);
  return record({n, d}, std::move(out), {x}, [n, d, indices = std::move(indices)](Node& nd) {
    if (!nd.inputs[0].requires_grad()) return;
    auto g = nd.output.grad();
    auto dx = nd.inputs[0].grad_mut();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) dx[indices[i] * d + j] += g[i * d + j];
  });
}

Tensor Tape::pairwise_sqdist(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
    throw std::invalid_argument("pairwise_sqdist: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), k = b.dim(0), d = a.dim(1);
  std::vector<double> out(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = a.at(i * d + j) - b.at(c * d + j);
        s += diff * diff;
      }
      out[i * k + c] = s;
    }
  }
  return record({n, k}, std::move(out), {a, b}, [n, k, d](Node& nd) {
    auto g = nd.output.grad();
    Tensor& a = nd.inputs[0];
    Tensor& b = nd.inputs[1];
    const bool wa = a.requires_grad(), wb = b.requires_grad();
    auto da = wa ? a.grad_mut() : std::span<double>{};
    auto db = wb ? b.grad_mut() : std::span<double>{};
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        const double gic = 2.0 * g[i * k + c];
        if (gic == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = av[i * d + j] - bv[c * d + j];
          if (wa) da[i * d + j] += gic * diff;
          if (wb) db[c * d + j] -= gic * diff;
        }
      }
    }
  });
}

Tensor Tape::stop_gradient(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  // Recorded with an empty rule so the input still participates in backward
  // bookkeeping (its grad is zeroed, never written).
  return record(x.shape(), std::move(out), {x}, [](Node&) {});
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar");
  }
  std::unordered_set<const void*> seen;
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) {
      if (in.requires_grad() && seen.insert(in.id()).second) in.zero_grad();
    }
    if (node.output.requires_grad() && seen.insert(node.output.id()).second) {
      node.output.zero_grad();
    }
  }
  if (!root.requires_grad()) return;  // detached root: all grads are zero
  Tensor r = root;
  r.grad_mut()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward(*it);
  }
}

}  // namespace lsor
