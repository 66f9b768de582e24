#pragma once

// Reverse-mode differentiation over whole-tensor primitives. A Tape records
// each primitive's output value together with a closure that maps the
// output gradient to input gradients; backward() replays them in reverse
// recording order, which is a valid reverse topological order because a
// node can only consume nodes recorded before it.

#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "powerkan/error.hpp"
#include "powerkan/spline.hpp"
#include "powerkan/tensor.hpp"

namespace powerkan {

namespace ops {

/// Per-sample basis values and derivatives for a batch: entry
/// [(s * n_in + p) * (G + k) + j] holds B_j(x[s, p]).
struct BasisCache {
  std::vector<double> values;
  std::vector<double> derivs;
  std::size_t basis_count = 0;
};

inline BasisCache spline_basis_batch(const Tensor& x, const KnotGrid& grid, bool with_derivs) {
  BasisCache cache;
  cache.basis_count = static_cast<std::size_t>(grid.basis_count());
  const std::size_t nb = cache.basis_count;
  cache.values.resize(x.size() * nb);
  if (with_derivs) cache.derivs.resize(x.size() * nb);
  auto xs = x.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::span<double> vals(cache.values.data() + i * nb, nb);
    std::span<double> ders;
    if (with_derivs) ders = std::span<double>(cache.derivs.data() + i * nb, nb);
    bspline_basis_all(grid, xs[i], vals, ders);
  }
  return cache;
}

/// out[s, q * n_in + p] = sum_j coeffs[q * n_in + p, j] * B_j(x[s, p]).
inline Tensor spline_edges(const Tensor& x, const Tensor& coeffs, const BasisCache& cache) {
  const std::size_t n_in = x.cols();
  const std::size_t nb = cache.basis_count;
  if (n_in == 0 || coeffs.rows() % n_in != 0 || coeffs.cols() != nb) {
    throw InputError("spline_eval_batch: coefficient block " + coeffs.shape_string() +
                     " incompatible with input " + x.shape_string());
  }
  const std::size_t edges = coeffs.rows();
  Tensor out(x.rows(), edges);
  for (std::size_t s = 0; s < x.rows(); ++s) {
    for (std::size_t e = 0; e < edges; ++e) {
      const std::size_t p = e % n_in;
      const double* b = cache.values.data() + (s * n_in + p) * nb;
      const auto c = coeffs.row(e);
      double sum = 0;
      for (std::size_t j = 0; j < nb; ++j) sum += c[j] * b[j];
      out(s, e) = sum;
    }
  }
  return out;
}

/// out[s, q] = sum_p v[q, p] * edges[s, q * n_in + p].
inline Tensor weighted_edge_sum(const Tensor& edges, const Tensor& v) {
  if (edges.cols() != v.rows() * v.cols()) {
    throw InputError("weighted_edge_sum: " + edges.shape_string() + " vs weights " +
                     v.shape_string());
  }
  const std::size_t n_in = v.cols();
  Tensor out(edges.rows(), v.rows());
  for (std::size_t s = 0; s < edges.rows(); ++s) {
    for (std::size_t q = 0; q < v.rows(); ++q) {
      double sum = 0;
      for (std::size_t p = 0; p < n_in; ++p) sum += v(q, p) * edges(s, q * n_in + p);
      out(s, q) = sum;
    }
  }
  return out;
}

inline double rmse(const Tensor& pred, const Tensor& target) {
  require(pred.same_shape(target), "rmse_loss", pred, target);
  if (pred.size() == 0) throw InputError("rmse_loss: empty input");
  double sum = 0;
  auto p = pred.data();
  auto t = target.data();
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] - t[i]) * (p[i] - t[i]);
  return std::sqrt(sum / static_cast<double>(p.size()));
}

}  // namespace ops

namespace ad {

struct NodeId {
  std::uint32_t index = 0;
  friend auto operator<=>(NodeId, NodeId) = default;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  NodeId constant(Tensor value) { return push(std::move(value), false, false, {}); }
  NodeId parameter(Tensor value) { return push(std::move(value), true, true, {}); }

  NodeId record(Tensor value, std::initializer_list<NodeId> inputs, Backward backward) {
    bool needs = false;
    for (NodeId in : inputs) needs = needs || node(in).requires_grad;
    return push(std::move(value), needs, false, needs ? std::move(backward) : Backward{});
  }

  const Tensor& value(NodeId id) const { return node(id).value; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds g into the gradient of id; no-op for nodes that need no gradient.
  void accumulate(NodeId id, const Tensor& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      ops::add_inplace(n.grad, g);
    }
  }

  /// Gradient of the last backward() target with respect to id.
  const Tensor& grad(NodeId id) const {
    const Node& n = node(id);
    if (n.grad.empty() && n.value.size() != 0) {
      throw InputError("node " + std::to_string(id.index) + " has no gradient");
    }
    return n.grad;
  }

  /// Runs the reverse sweep from a scalar loss and returns the gradient of
  /// every parameter leaf (zeros for parameters the loss does not reach).
  std::map<NodeId, Tensor> backward(NodeId loss) {
    Node& l = node(loss);
    if (l.value.rows() != 1 || l.value.cols() != 1) {
      throw InputError("backward: loss node " + std::to_string(loss.index) + " is " +
                       l.value.shape_string() + ", expected a scalar");
    }
    if (!std::isfinite(l.value(0, 0))) {
      throw NumericError("backward: loss node " + std::to_string(loss.index) + " is not finite");
    }
    for (Node& n : nodes_) n.grad = Tensor();
    l.grad = Tensor(1, 1, 1.0);
    for (std::uint32_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (!n.grad.all_finite()) {
        throw NumericError("backward: non-finite gradient at node " + std::to_string(i));
      }
      if (n.backward) n.backward(*this, n.grad);
    }
    std::map<NodeId, Tensor> out;
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (!n.is_parameter) continue;
      out.emplace(NodeId{i}, n.grad.empty() ? Tensor(n.value.rows(), n.value.cols()) : n.grad);
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_parameter = false;
    Backward backward;
  };

  NodeId push(Tensor value, bool requires_grad, bool is_parameter, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, is_parameter, std::move(backward)});
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Node& node(NodeId id) {
    if (id.index >= nodes_.size()) throw InputError("unknown tape node " + std::to_string(id.index));
    return nodes_[id.index];
  }
  const Node& node(NodeId id) const {
    if (id.index >= nodes_.size()) throw InputError("unknown tape node " + std::to_string(id.index));
    return nodes_[id.index];
  }

  std::vector<Node> nodes_;
};

inline NodeId matmul(Tape& t, NodeId a, NodeId b) {
  return t.record(ops::matmul(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, ops::matmul_bt(g, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, ops::matmul_at(tp.value(a), g));
  });
}

/// a * b^T.
inline NodeId matmul_bt(Tape& t, NodeId a, NodeId b) {
  return t.record(ops::matmul_bt(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, ops::matmul(g, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, ops::matmul_at(g, tp.value(a)));
  });
}

inline NodeId add(Tape& t, NodeId a, NodeId b) {
  Tensor out = t.value(a);
  ops::add_inplace(out, t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

/// a + bias broadcast over rows; bias is 1 x cols.
inline NodeId add_row(Tape& t, NodeId a, NodeId bias) {
  Tensor out = t.value(a);
  ops::add_row_inplace(out, t.value(bias));
  return t.record(std::move(out), {a, bias}, [a, bias](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(bias)) {
      Tensor gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
      tp.accumulate(bias, gb);
    }
  });
}

inline NodeId scale(Tape& t, NodeId a, double s) {
  return t.record(ops::map(t.value(a), [s](double v) { return s * v; }), {a},
                  [a, s](Tape& tp, const Tensor& g) {
                    tp.accumulate(a, ops::map(g, [s](double v) { return s * v; }));
                  });
}

/// Elementwise x / (1 + e^{-x}).
inline NodeId silu_basis(Tape& t, NodeId a) {
  return t.record(ops::map(t.value(a), ops::silu), {a}, [a](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    Tensor gx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) gx.data()[i] = g.data()[i] * ops::silu_derivative(x.data()[i]);
    tp.accumulate(a, gx);
  });
}

/// Elementwise sigma_k. The derivative is k * sigma_{k-1}(x) for x > 0 and
/// 0 for x <= 0 (including the k == 1 kink).
inline NodeId relu_pow(Tape& t, NodeId a, int k) {
  if (k < 0) throw InputError("relu_pow: k must be >= 0");
  return t.record(ops::map(t.value(a), [k](double v) { return powerkan::relu_pow(k, v); }), {a},
                  [a, k](Tape& tp, const Tensor& g) {
                    const Tensor& x = tp.value(a);
                    Tensor gx(x.rows(), x.cols());
                    for (std::size_t i = 0; i < x.size(); ++i) {
                      const double v = x.data()[i];
                      const double d = (k >= 1 && v > 0) ? k * powerkan::relu_pow(k - 1, v) : 0.0;
                      gx.data()[i] = g.data()[i] * d;
                    }
                    tp.accumulate(a, gx);
                  });
}

/// Per-edge spline values: out[s, e] with e = q * n_in + p evaluates the
/// spline whose coefficients are row e of coeffs at x[s, p]. Knots are
/// constants; gradients flow to the coefficients and to x.
inline NodeId spline_eval_batch(Tape& t, NodeId x, NodeId coeffs, const KnotGrid& grid) {
  auto cache = std::make_shared<ops::BasisCache>(
      ops::spline_basis_batch(t.value(x), grid, t.requires_grad(x)));
  Tensor out = ops::spline_edges(t.value(x), t.value(coeffs), *cache);
  return t.record(std::move(out), {x, coeffs}, [x, coeffs, cache](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    const Tensor& cv = tp.value(coeffs);
    const std::size_t n_in = xv.cols();
    const std::size_t nb = cache->basis_count;
    if (tp.requires_grad(coeffs)) {
      Tensor gc(cv.rows(), cv.cols());
      for (std::size_t s = 0; s < xv.rows(); ++s) {
        for (std::size_t e = 0; e < cv.rows(); ++e) {
          const double ge = g(s, e);
          if (ge == 0.0) continue;
          const double* b = cache->values.data() + (s * n_in + e % n_in) * nb;
          for (std::size_t j = 0; j < nb; ++j) gc(e, j) += ge * b[j];
        }
      }
      tp.accumulate(coeffs, gc);
    }
    if (tp.requires_grad(x)) {
      Tensor gx(xv.rows(), xv.cols());
      for (std::size_t s = 0; s < xv.rows(); ++s) {
        for (std::size_t e = 0; e < cv.rows(); ++e) {
          const std::size_t p = e % n_in;
          const double* d = cache->derivs.data() + (s * n_in + p) * nb;
          const auto c = cv.row(e);
          double slope = 0;
          for (std::size_t j = 0; j < nb; ++j) slope += c[j] * d[j];
          gx(s, p) += g(s, e) * slope;
        }
      }
      tp.accumulate(x, gx);
    }
  });
}

/// out[s, q] = sum_p v[q, p] * edges[s, q * n_in + p].
inline NodeId weighted_edge_sum(Tape& t, NodeId edges, NodeId v) {
  return t.record(ops::weighted_edge_sum(t.value(edges), t.value(v)), {edges, v},
                  [edges, v](Tape& tp, const Tensor& g) {
                    const Tensor& ev = tp.value(edges);
                    const Tensor& vv = tp.value(v);
                    const std::size_t n_in = vv.cols();
                    if (tp.requires_grad(edges)) {
                      Tensor ge(ev.rows(), ev.cols());
                      for (std::size_t s = 0; s < ev.rows(); ++s) {
                        for (std::size_t q = 0; q < vv.rows(); ++q) {
                          for (std::size_t p = 0; p < n_in; ++p) ge(s, q * n_in + p) = g(s, q) * vv(q, p);
                        }
                      }
                      tp.accumulate(edges, ge);
                    }
                    if (tp.requires_grad(v)) {
                      Tensor gv(vv.rows(), vv.cols());
                      for (std::size_t s = 0; s < ev.rows(); ++s) {
                        for (std::size_t q = 0; q < vv.rows(); ++q) {
                          for (std::size_t p = 0; p < n_in; ++p) gv(q, p) += g(s, q) * ev(s, q * n_in + p);
                        }
                      }
                      tp.accumulate(v, gv);
                    }
                  });
}

/// sqrt(mean((pred - target)^2)) as a 1 x 1 node. The gradient at zero loss
/// is taken as zero.
inline NodeId rmse_loss(Tape& t, NodeId pred, NodeId target) {
  const double loss = ops::rmse(t.value(pred), t.value(target));
  return t.record(Tensor(1, 1, loss), {pred, target}, [pred, target, loss](Tape& tp, const Tensor& g) {
    const Tensor& p = tp.value(pred);
    const Tensor& y = tp.value(target);
    Tensor gp(p.rows(), p.cols());
    if (loss > 0) {
      const double s = g(0, 0) / (static_cast<double>(p.size()) * loss);
      for (std::size_t i = 0; i < p.size(); ++i) gp.data()[i] = s * (p.data()[i] - y.data()[i]);
    }
    tp.accumulate(pred, gp);
    if (tp.requires_grad(target)) {
      tp.accumulate(target, ops::map(gp, [](double v) { return -v; }));
    }
  });
}

}  // namespace ad
}  // namespace powerkan
