#pragma once

// KAN, PowerMLP and dense layers plus their composition into networks.
//
//   KAN layer:      out_q = sum_p u_qp b(x_p) + v_qp spline_qp(x_p)
//   PowerMLP layer: out   = alpha b(x) + beta sigma_k(omega x + gamma)   (hidden)
//                   out   = omega x + gamma                              (final)
//   dense layer:    out   = relu?(W x + bias)
//
// beta is normally absent (identity). Networks produced by the KAN to
// PowerMLP conversion keep an explicit beta so that the next layer sees the
// KAN activations themselves. b is x / (1 + e^{-x}).

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "powerkan/autodiff.hpp"
#include "powerkan/error.hpp"
#include "powerkan/rng.hpp"
#include "powerkan/spline.hpp"
#include "powerkan/tensor.hpp"

namespace powerkan {

enum class NetworkKind { kKan, kPowerMlp, kMlp };

inline std::string to_string(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::kKan: return "kan";
    case NetworkKind::kPowerMlp: return "powermlp";
    case NetworkKind::kMlp: return "mlp";
  }
  return "?";
}

inline NetworkKind parse_network_kind(const std::string& s) {
  if (s == "kan") return NetworkKind::kKan;
  if (s == "powermlp") return NetworkKind::kPowerMlp;
  if (s == "mlp") return NetworkKind::kMlp;
  throw InputError("unknown network kind '" + s + "' (expected kan, powermlp or mlp)");
}

struct KanLayer {
  KnotGrid grid;
  Tensor u;       ///< n_out x n_in basis weights
  Tensor v;       ///< n_out x n_in spline weights
  Tensor coeffs;  ///< (n_out * n_in) x (G + k); row q * n_in + p is edge (q, p)

  std::size_t n_in() const { return u.cols(); }
  std::size_t n_out() const { return u.rows(); }

  SplineFunction spline(std::size_t q, std::size_t p) const {
    const auto row = coeffs.row(q * n_in() + p);
    return SplineFunction(grid, std::vector<double>(row.begin(), row.end()));
  }

  void validate() const {
    const auto nb = static_cast<std::size_t>(grid.basis_count());
    if (!u.same_shape(v) || u.size() == 0) throw InputError("kan layer: u and v must share a non-empty shape");
    if (coeffs.rows() != n_in() * n_out() || coeffs.cols() != nb) {
      throw InputError("kan layer: coeffs must be " + std::to_string(n_in() * n_out()) + "x" +
                       std::to_string(nb) + ", got " + coeffs.shape_string());
    }
  }
};

struct PowerMlpLayer {
  Tensor omega;  ///< units x n_in
  Tensor gamma;  ///< 1 x units
  Tensor alpha;  ///< n_out x n_in, empty when the layer has no basis path
  Tensor beta;   ///< n_out x units, empty means identity
  int k = 1;
  bool is_final = false;

  std::size_t n_in() const { return omega.cols(); }
  std::size_t units() const { return omega.rows(); }
  std::size_t n_out() const { return beta.empty() ? units() : beta.rows(); }
  bool has_basis() const { return !alpha.empty(); }

  void validate() const {
    if (omega.size() == 0) throw InputError("powermlp layer: omega is empty");
    if (gamma.rows() != 1 || gamma.cols() != units()) {
      throw InputError("powermlp layer: gamma must be 1x" + std::to_string(units()));
    }
    if (k < 1) throw InputError("powermlp layer: k must be >= 1");
    if (is_final && (!alpha.empty() || !beta.empty())) {
      throw InputError("powermlp layer: the final layer is affine only (no alpha, no beta)");
    }
    if (!beta.empty() && beta.cols() != units()) {
      throw InputError("powermlp layer: beta must have " + std::to_string(units()) + " columns");
    }
    if (!alpha.empty() && (alpha.rows() != n_out() || alpha.cols() != n_in())) {
      throw InputError("powermlp layer: alpha must be " + std::to_string(n_out()) + "x" +
                       std::to_string(n_in()));
    }
  }
};

struct DenseLayer {
  Tensor weight;  ///< n_out x n_in
  Tensor bias;    ///< 1 x n_out
  bool relu = true;

  std::size_t n_in() const { return weight.cols(); }
  std::size_t n_out() const { return weight.rows(); }

  void validate() const {
    if (weight.size() == 0) throw InputError("dense layer: weight is empty");
    if (bias.rows() != 1 || bias.cols() != n_out()) {
      throw InputError("dense layer: bias must be 1x" + std::to_string(n_out()));
    }
  }
};

using Layer = std::variant<KanLayer, PowerMlpLayer, DenseLayer>;

inline std::size_t layer_n_in(const Layer& l) {
  return std::visit([](const auto& x) { return x.n_in(); }, l);
}
inline std::size_t layer_n_out(const Layer& l) {
  return std::visit([](const auto& x) { return x.n_out(); }, l);
}

namespace detail {

template <typename L>
auto layer_parameters_impl(L& l) {
  using T = std::conditional_t<std::is_const_v<L>, const Tensor, Tensor>;
  std::vector<T*> out;
  std::visit(
      [&out](auto& x) {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, KanLayer>) {
          out = {&x.u, &x.v, &x.coeffs};
        } else if constexpr (std::is_same_v<X, PowerMlpLayer>) {
          out = {&x.omega, &x.gamma};
          if (!x.alpha.empty()) out.push_back(&x.alpha);
          if (!x.beta.empty()) out.push_back(&x.beta);
        } else {
          out = {&x.weight, &x.bias};
        }
      },
      l);
  return out;
}

}  // namespace detail

/// Trainable tensors of a layer in a fixed order.
inline std::vector<Tensor*> layer_parameters(Layer& l) { return detail::layer_parameters_impl(l); }
inline std::vector<const Tensor*> layer_parameters(const Layer& l) { return detail::layer_parameters_impl(l); }

struct Network {
  NetworkKind kind = NetworkKind::kMlp;
  std::size_t input_dim = 0;
  int k = 0;  ///< spline / ReLU power order; 0 for plain MLPs
  std::string name;
  std::uint64_t seed = 0;
  std::vector<Layer> layers;

  std::size_t output_dim() const { return layers.empty() ? input_dim : layer_n_out(layers.back()); }

  /// Layer widths [n_0, n_1, ..., n_L].
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d{input_dim};
    for (const auto& l : layers) d.push_back(layer_n_out(l));
    return d;
  }

  void validate() const {
    if (layers.empty()) throw InputError("network has no layers");
    std::size_t width = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string where = "layer " + std::to_string(i) + ": ";
      const Layer& l = layers[i];
      const bool kind_ok = (kind == NetworkKind::kKan && std::holds_alternative<KanLayer>(l)) ||
                           (kind == NetworkKind::kPowerMlp && std::holds_alternative<PowerMlpLayer>(l)) ||
                           (kind == NetworkKind::kMlp && std::holds_alternative<DenseLayer>(l));
      if (!kind_ok) throw InputError(where + "layer kind does not match network kind " + to_string(kind));
      try {
        std::visit([](const auto& x) { x.validate(); }, l);
      } catch (const InputError& e) {
        throw InputError(where + e.what());
      }
      if (layer_n_in(l) != width) {
        throw InputError(where + "expects " + std::to_string(layer_n_in(l)) + " inputs but receives " +
                         std::to_string(width));
      }
      width = layer_n_out(l);
      if (const auto* pm = std::get_if<PowerMlpLayer>(&l)) {
        if (pm->k != k) throw InputError(where + "order differs from network order");
        if (pm->is_final != (i + 1 == layers.size())) {
          throw InputError(where + "exactly the last PowerMLP layer must be flagged final");
        }
      }
      if (const auto* kan = std::get_if<KanLayer>(&l)) {
        if (kan->grid.order() != k) throw InputError(where + "grid order differs from network order");
      }
    }
  }
};

inline std::vector<Tensor*> network_parameters(Network& net) {
  std::vector<Tensor*> out;
  for (auto& l : net.layers) {
    for (Tensor* t : layer_parameters(l)) out.push_back(t);
  }
  return out;
}

inline std::size_t parameter_count(const Layer& l) {
  std::size_t n = 0;
  for (const Tensor* t : layer_parameters(l)) n += t->size();
  return n;
}

inline std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += parameter_count(l);
  return n;
}

inline std::size_t nonzero_parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) {
    for (const Tensor* t : layer_parameters(l)) {
      for (double v : t->data()) n += (v != 0.0);
    }
  }
  return n;
}

/// Parameter count of a freshly built network of the given shape.
/// KAN layers: n_in n_out (G + k + 2). PowerMLP hidden layers: 2 n_in n_out +
/// n_out (n_in n_out + n_out without basis); final and MLP layers:
/// n_in n_out + n_out.
inline std::size_t parameter_count(NetworkKind kind, const std::vector<std::size_t>& dims, int k = 0,
                                   int grid_count = 0, bool basis = true) {
  if (dims.size() < 2) throw InputError("shape needs at least input and output widths");
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t a = dims[i], b = dims[i + 1];
    const bool last = i + 2 == dims.size();
    switch (kind) {
      case NetworkKind::kKan:
        n += a * b * static_cast<std::size_t>(grid_count + k + 2);
        break;
      case NetworkKind::kPowerMlp:
        n += a * b + b + ((last || !basis) ? 0 : a * b);
        break;
      case NetworkKind::kMlp:
        n += a * b + b;
        break;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// Forward passes.

inline Tensor kan_forward(const KanLayer& layer, const Tensor& x) {
  if (x.cols() != layer.n_in()) {
    throw InputError("kan_forward: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                     std::to_string(layer.n_in()));
  }
  Tensor out = ops::matmul_bt(ops::map(x, ops::silu), layer.u);
  const auto cache = ops::spline_basis_batch(x, layer.grid, false);
  ops::add_inplace(out, ops::weighted_edge_sum(ops::spline_edges(x, layer.coeffs, cache), layer.v));
  return out;
}

inline Tensor powermlp_forward(const PowerMlpLayer& layer, const Tensor& x) {
  if (x.cols() != layer.n_in()) {
    throw InputError("powermlp_forward: input has " + std::to_string(x.cols()) +
                     " columns, layer expects " + std::to_string(layer.n_in()));
  }
  Tensor pre = ops::matmul_bt(x, layer.omega);
  ops::add_row_inplace(pre, layer.gamma);
  if (layer.is_final) return pre;
  const int k = layer.k;
  Tensor out = ops::map(pre, [k](double v) { return relu_pow(k, v); });
  if (!layer.beta.empty()) out = ops::matmul_bt(out, layer.beta);
  if (layer.has_basis()) ops::add_inplace(out, ops::matmul_bt(ops::map(x, ops::silu), layer.alpha));
  return out;
}

inline Tensor dense_forward(const DenseLayer& layer, const Tensor& x) {
  if (x.cols() != layer.n_in()) throw InputError("dense_forward: input width mismatch");
  Tensor out = ops::matmul_bt(x, layer.weight);
  ops::add_row_inplace(out, layer.bias);
  if (layer.relu) {
    for (double& v : out.data()) v = v > 0 ? v : 0.0;
  }
  return out;
}

inline Tensor layer_forward(const Layer& l, const Tensor& x) {
  return std::visit(
      [&x](const auto& layer) -> Tensor {
        using T = std::decay_t<decltype(layer)>;
        if constexpr (std::is_same_v<T, KanLayer>) return kan_forward(layer, x);
        else if constexpr (std::is_same_v<T, PowerMlpLayer>) return powermlp_forward(layer, x);
        else return dense_forward(layer, x);
      },
      l);
}

/// x is batch x input_dim; returns batch x output_dim.
inline Tensor network_forward(const Network& net, const Tensor& x) {
  if (x.cols() != net.input_dim) {
    throw InputError("network_forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                     std::to_string(net.input_dim));
  }
  Tensor h = x;
  for (const auto& l : net.layers) h = layer_forward(l, h);
  return h;
}

struct TapedForward {
  ad::NodeId output;
  std::vector<ad::NodeId> parameters;  ///< same order as network_parameters()
};

inline ad::NodeId layer_forward_taped(const Layer& l, ad::Tape& tape, ad::NodeId x,
                                      std::vector<ad::NodeId>& params) {
  if (const auto* kan = std::get_if<KanLayer>(&l)) {
    const auto u = tape.parameter(kan->u);
    const auto v = tape.parameter(kan->v);
    const auto c = tape.parameter(kan->coeffs);
    params.insert(params.end(), {u, v, c});
    const auto basis = ad::matmul_bt(tape, ad::silu_basis(tape, x), u);
    const auto edges = ad::spline_eval_batch(tape, x, c, kan->grid);
    return ad::add(tape, basis, ad::weighted_edge_sum(tape, edges, v));
  }
  if (const auto* pm = std::get_if<PowerMlpLayer>(&l)) {
    const auto w = tape.parameter(pm->omega);
    const auto g = tape.parameter(pm->gamma);
    params.insert(params.end(), {w, g});
    auto h = ad::add_row(tape, ad::matmul_bt(tape, x, w), g);
    if (pm->is_final) return h;
    std::optional<ad::NodeId> a;
    if (pm->has_basis()) {
      a = tape.parameter(pm->alpha);
      params.push_back(*a);
    }
    h = ad::relu_pow(tape, h, pm->k);
    if (!pm->beta.empty()) {
      const auto b = tape.parameter(pm->beta);
      params.push_back(b);
      h = ad::matmul_bt(tape, h, b);
    }
    if (a) h = ad::add(tape, h, ad::matmul_bt(tape, ad::silu_basis(tape, x), *a));
    return h;
  }
  const auto& d = std::get<DenseLayer>(l);
  const auto w = tape.parameter(d.weight);
  const auto b = tape.parameter(d.bias);
  params.insert(params.end(), {w, b});
  auto h = ad::add_row(tape, ad::matmul_bt(tape, x, w), b);
  return d.relu ? ad::relu_pow(tape, h, 1) : h;
}

inline TapedForward network_forward_taped(const Network& net, const Tensor& x, ad::Tape& tape) {
  if (x.cols() != net.input_dim) throw InputError("network_forward_taped: input width mismatch");
  TapedForward out;
  ad::NodeId h = tape.constant(x);
  for (const auto& l : net.layers) h = layer_forward_taped(l, tape, h, out.parameters);
  out.output = h;
  return out;
}

// ---------------------------------------------------------------------------
// Construction with the default initialisation.

namespace detail {

inline Tensor uniform_tensor(std::size_t r, std::size_t c, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(r, c);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

inline void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw InputError("shape needs at least input and output widths");
  for (std::size_t d : dims) {
    if (d == 0) throw InputError("layer widths must be positive");
  }
}

}  // namespace detail

/// Scale keeping sigma_k pre-activations of order one: 1 for k == 1,
/// (1/k!)^(1/k) otherwise.
inline double relu_pow_init_scale(int k) {
  if (k <= 1) return 1.0;
  double fact = 1;
  for (int i = 2; i <= k; ++i) fact *= i;
  return std::pow(1.0 / fact, 1.0 / k);
}

/// KAN with uniform grids on [lo, hi]; coefficients ~ N(0, 0.1^2), u = v = 1.
inline Network make_kan(const std::vector<std::size_t>& dims, int k, int grid_count, std::uint64_t seed,
                        double lo = -1.0, double hi = 1.0) {
  detail::check_dims(dims);
  if (k < 1) throw InputError("KAN order k must be >= 1");
  auto rng = make_stream(seed, "init");
  std::normal_distribution<double> normal(0.0, 0.1);
  Network net;
  net.kind = NetworkKind::kKan;
  net.input_dim = dims.front();
  net.k = k;
  net.seed = seed;
  const KnotGrid grid = KnotGrid::uniform(k, grid_count, lo, hi);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t n = dims[i], m = dims[i + 1];
    KanLayer layer{grid, Tensor(m, n, 1.0), Tensor(m, n, 1.0),
                   Tensor(m * n, static_cast<std::size_t>(grid.basis_count()))};
    for (double& c : layer.coeffs.data()) c = normal(rng);
    net.layers.emplace_back(std::move(layer));
  }
  return net;
}

/// PowerMLP: omega ~ U(+-sqrt(6 / fan_in) * s_k), gamma = 0,
/// alpha ~ U(+-sqrt(3 / fan_in)).
/// basis == false drops alpha entirely (the no-basis ablation variant).
inline Network make_powermlp(const std::vector<std::size_t>& dims, int k, std::uint64_t seed,
                             bool basis = true) {
  detail::check_dims(dims);
  if (k < 1) throw InputError("PowerMLP order k must be >= 1");
  auto rng = make_stream(seed, "init");
  Network net;
  net.kind = NetworkKind::kPowerMlp;
  net.input_dim = dims.front();
  net.k = k;
  net.seed = seed;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t n = dims[i], m = dims[i + 1];
    const bool final = i + 2 == dims.size();
    PowerMlpLayer layer;
    layer.k = k;
    layer.is_final = final;
    const double scale = final ? 1.0 : relu_pow_init_scale(k);
    layer.omega = detail::uniform_tensor(m, n, std::sqrt(6.0 / static_cast<double>(n)) * scale, rng);
    layer.gamma = Tensor(1, m);
    if (!final && basis) layer.alpha = detail::uniform_tensor(m, n, std::sqrt(3.0 / static_cast<double>(n)), rng);
    net.layers.emplace_back(std::move(layer));
  }
  return net;
}

/// ReLU MLP with an affine output layer; weights ~ U(+-sqrt(6 / fan_in)), bias 0.
inline Network make_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  detail::check_dims(dims);
  auto rng = make_stream(seed, "init");
  Network net;
  net.kind = NetworkKind::kMlp;
  net.input_dim = dims.front();
  net.seed = seed;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t n = dims[i], m = dims[i + 1];
    DenseLayer layer{detail::uniform_tensor(m, n, std::sqrt(6.0 / static_cast<double>(n)), rng), Tensor(1, m),
                     i + 2 != dims.size()};
    net.layers.emplace_back(std::move(layer));
  }
  return net;
}

}  // namespace powerkan
