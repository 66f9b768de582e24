#pragma once

// Closed-form FLOPs per forward pass, exact in rational arithmetic.
//
//   dense / final affine:  2 n m
//   KAN:                   n m (9kG + 13.5k^2 + 2G - 2.5k + 3) + lambda n
//   PowerMLP hidden:       4 n m + (k - 1) m + lambda n
//
// lambda is the cost of one basis evaluation. Costs are kept as
// constant + lambda_coeff * lambda so they can be printed symbolically.
// A hidden PowerMLP layer without basis costs 2 n m + (k - 1) m. One with an
// explicit beta (n -> H units -> m) costs
//   2 n H + (k - 1) H + 2 H m - m + [2 n m + lambda n when alpha is present].

#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/rational.hpp>

#include "powerkan/error.hpp"
#include "powerkan/layers.hpp"

namespace powerkan {

using Rational = boost::rational<std::int64_t>;

inline constexpr double kDefaultBasisCost = 5.0;

struct Cost {
  Rational constant{0};
  Rational lambda_coeff{0};

  Rational at(Rational lambda) const { return constant + lambda_coeff * lambda; }
  double at(double lambda) const {
    return boost::rational_cast<double>(constant) + boost::rational_cast<double>(lambda_coeff) * lambda;
  }

  Cost& operator+=(const Cost& o) {
    constant += o.constant;
    lambda_coeff += o.lambda_coeff;
    return *this;
  }
  friend Cost operator+(Cost a, const Cost& b) { return a += b; }
  friend bool operator==(const Cost&, const Cost&) = default;

  /// "612 + 3*lambda"
  std::string symbolic() const {
    std::ostringstream os;
    auto put = [&os](Rational r) {
      if (r.denominator() == 1) os << r.numerator();
      else os << r.numerator() << "/" << r.denominator();
    };
    put(constant);
    if (lambda_coeff != Rational(0)) {
      os << " + ";
      put(lambda_coeff);
      os << "*lambda";
    }
    return os.str();
  }
};

inline std::string format_rational(Rational r) {
  if (r.denominator() == 1) return std::to_string(r.numerator());
  std::ostringstream os;
  os << std::setprecision(17) << boost::rational_cast<double>(r);
  return os.str();
}

/// Layer role for cost purposes.
enum class CostKind { kDense, kKan, kPowerMlpHidden, kPowerMlpNoBasis, kAffine };

inline Cost flops_layer(CostKind kind, std::int64_t d_in, std::int64_t d_out, int k = 0, int grid_count = 0) {
  if (d_in <= 0 || d_out <= 0) throw InputError("flops: layer widths must be positive");
  const std::int64_t nm = d_in * d_out;
  switch (kind) {
    case CostKind::kDense:
    case CostKind::kAffine:
      return {Rational(2 * nm), 0};
    case CostKind::kKan: {
      const Rational kk(k), g(grid_count);
      const Rational per_edge = 9 * kk * g + Rational(27, 2) * kk * kk + 2 * g - Rational(5, 2) * kk + 3;
      return {per_edge * nm, Rational(d_in)};
    }
    case CostKind::kPowerMlpHidden:
      return {Rational(4 * nm + (k - 1) * d_out), Rational(d_in)};
    case CostKind::kPowerMlpNoBasis:
      return {Rational(2 * nm + (k - 1) * d_out), 0};
  }
  return {};
}

inline Cost flops_layer(const Layer& l) {
  if (const auto* kan = std::get_if<KanLayer>(&l)) {
    return flops_layer(CostKind::kKan, static_cast<std::int64_t>(kan->n_in()),
                       static_cast<std::int64_t>(kan->n_out()), kan->grid.order(), kan->grid.grid_count());
  }
  if (const auto* pm = std::get_if<PowerMlpLayer>(&l)) {
    const auto n = static_cast<std::int64_t>(pm->n_in());
    const auto h = static_cast<std::int64_t>(pm->units());
    const auto m = static_cast<std::int64_t>(pm->n_out());
    if (pm->is_final) return flops_layer(CostKind::kAffine, n, h);
    if (pm->beta.empty()) {
      return flops_layer(pm->has_basis() ? CostKind::kPowerMlpHidden : CostKind::kPowerMlpNoBasis, n, h, pm->k);
    }
    Cost c{Rational(2 * n * h + (pm->k - 1) * h + 2 * h * m - m), 0};
    if (pm->has_basis()) c += Cost{Rational(2 * n * m), Rational(n)};
    return c;
  }
  const auto& d = std::get<DenseLayer>(l);
  return flops_layer(CostKind::kDense, static_cast<std::int64_t>(d.n_in()), static_cast<std::int64_t>(d.n_out()));
}

struct LayerCost {
  std::size_t index = 0;
  std::string kind;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t params = 0;
  Cost flops;
};

struct CostReport {
  std::string model;
  std::vector<LayerCost> layers;
  Cost total;
  std::size_t params = 0;
  Rational lambda{5};
  std::vector<std::string> notes;

  Rational total_flops() const { return total.at(lambda); }
  double ratio() const {
    return params == 0 ? 0.0 : boost::rational_cast<double>(total_flops()) / static_cast<double>(params);
  }
};

inline void check_lambda(Rational lambda) {
  if (lambda < Rational(0)) throw InputError("flops: lambda must be non-negative");
}

inline CostReport cost_report(const Network& net, Rational lambda = Rational(5)) {
  check_lambda(lambda);
  CostReport rep;
  rep.model = net.name.empty() ? to_string(net.kind) : net.name;
  rep.lambda = lambda;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    LayerCost lc;
    lc.index = i;
    lc.d_in = layer_n_in(l);
    lc.d_out = layer_n_out(l);
    lc.params = parameter_count(l);
    lc.flops = flops_layer(l);
    if (std::holds_alternative<KanLayer>(l)) lc.kind = "kan";
    else if (const auto* pm = std::get_if<PowerMlpLayer>(&l)) lc.kind = pm->is_final ? "affine" : "powermlp";
    else lc.kind = std::get<DenseLayer>(l).relu ? "dense-relu" : "dense";
    rep.total += lc.flops;
    rep.params += lc.params;
    rep.layers.push_back(std::move(lc));
  }
  return rep;
}

/// Cost of a network described only by shape.
inline Cost flops_network(NetworkKind kind, const std::vector<std::size_t>& dims, int k = 0, int grid_count = 0,
                          bool basis = true) {
  if (dims.size() < 2) throw InputError("flops: shape needs at least two widths");
  Cost c;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto a = static_cast<std::int64_t>(dims[i]), b = static_cast<std::int64_t>(dims[i + 1]);
    const bool last = i + 2 == dims.size();
    switch (kind) {
      case NetworkKind::kKan: c += flops_layer(CostKind::kKan, a, b, k, grid_count); break;
      case NetworkKind::kMlp: c += flops_layer(CostKind::kDense, a, b); break;
      case NetworkKind::kPowerMlp:
        c += flops_layer(last ? CostKind::kAffine : (basis ? CostKind::kPowerMlpHidden : CostKind::kPowerMlpNoBasis),
                         a, b, k);
        break;
    }
  }
  return c;
}

/// FLOPs per parameter for a shape.
inline double ratio(NetworkKind kind, const std::vector<std::size_t>& dims, int k, int grid_count,
                    double lambda = kDefaultBasisCost) {
  if (lambda < 0) throw InputError("flops: lambda must be non-negative");
  const double f = flops_network(kind, dims, k, grid_count).at(lambda);
  return f / static_cast<double>(parameter_count(kind, dims, k, grid_count));
}

/// Limit of the per-layer FLOPs/params ratio as d_in, d_out grow together.
inline Rational asymptotic_ratio_exact(NetworkKind kind, int k = 0, int grid_count = 0) {
  switch (kind) {
    case NetworkKind::kMlp: return Rational(2);
    case NetworkKind::kPowerMlp: return Rational(2);
    case NetworkKind::kKan: {
      const Rational kk(k), g(grid_count);
      return (9 * kk * g + Rational(27, 2) * kk * kk + 2 * g - Rational(5, 2) * kk + 3) / (kk + g + 2);
    }
  }
  return Rational(0);
}

inline double asymptotic_ratio(NetworkKind kind, int k = 0, int grid_count = 0) {
  return boost::rational_cast<double>(asymptotic_ratio_exact(kind, k, grid_count));
}

/// Widths [input, w, ..., w, output] with `depth` layers whose parameter count
/// is within 5% of the target; the smallest such w wins.
inline std::vector<std::size_t> match_param_budget(std::size_t target, NetworkKind kind, std::size_t depth, int k,
                                                   int grid_count, std::size_t input_dim, std::size_t output_dim,
                                                   std::size_t max_width = 1 << 16) {
  if (depth == 0 || input_dim == 0 || output_dim == 0 || target == 0) {
    throw InputError("match_param_budget: depth, widths and target must be positive");
  }
  auto shape = [&](std::size_t w) {
    std::vector<std::size_t> dims{input_dim};
    for (std::size_t i = 1; i < depth; ++i) dims.push_back(w);
    dims.push_back(output_dim);
    return dims;
  };
  const double lo = 0.95 * static_cast<double>(target), hi = 1.05 * static_cast<double>(target);
  const std::size_t last_w = depth == 1 ? 1 : max_width;
  for (std::size_t w = 1; w <= last_w; ++w) {
    const auto dims = shape(w);
    const auto count = static_cast<double>(parameter_count(kind, dims, k, grid_count));
    if (count >= lo && count <= hi) return dims;
    if (count > hi) break;
  }
  throw InputError("match_param_budget: no uniform width reaches " + std::to_string(target) +
                   " parameters within 5%");
}

/// Published reference figures for the small-size comparison.
struct ReferenceRow {
  NetworkKind kind;
  std::vector<std::size_t> dims;
  int k;
  int grid_count;
  std::size_t params;
  std::int64_t flops;
};

inline std::vector<ReferenceRow> reference_rows() {
  return {{NetworkKind::kKan, {2, 1, 1}, 3, 3, 24, 564},
          {NetworkKind::kMlp, {2, 6, 1}, 0, 0, 25, 36},
          {NetworkKind::kPowerMlp, {2, 4, 1}, 3, 0, 25, 40}};
}

/// Note printed next to a report whose shape matches a reference row.
inline std::optional<std::string> reference_note(NetworkKind kind, const std::vector<std::size_t>& dims, int k,
                                                 int grid_count) {
  for (const auto& row : reference_rows()) {
    if (row.kind != kind || row.dims != dims || row.k != k) continue;
    if (kind == NetworkKind::kKan && row.grid_count != grid_count) continue;
    const Cost c = flops_network(kind, dims, k, grid_count);
    for (std::int64_t lam = 0; lam <= 1000; ++lam) {
      if (c.at(Rational(lam)) == Rational(row.flops)) {
        return "reference table lists " + std::to_string(row.flops) + " FLOPs; per-layer formulas give " +
               c.symbolic() + " (agrees at lambda = " + std::to_string(lam) + ")";
      }
    }
    return "reference table lists " + std::to_string(row.flops) + " FLOPs; per-layer formulas give " +
           c.symbolic() + ", which does not match for any lambda >= 0; the formulas are reported";
  }
  return std::nullopt;
}

inline std::string render_table(const CostReport& rep) {
  std::ostringstream os;
  os << "model: " << rep.model << "\n";
  os << "lambda: " << format_rational(rep.lambda) << "\n";
  os << std::left << std::setw(6) << "layer" << std::setw(12) << "kind" << std::setw(8) << "d_in" << std::setw(8)
     << "d_out" << std::setw(10) << "params" << std::setw(26) << "flops(lambda)" << "flops\n";
  for (const auto& l : rep.layers) {
    os << std::setw(6) << l.index << std::setw(12) << l.kind << std::setw(8) << l.d_in << std::setw(8) << l.d_out
       << std::setw(10) << l.params << std::setw(26) << l.flops.symbolic() << format_rational(l.flops.at(rep.lambda))
       << "\n";
  }
  os << "total params: " << rep.params << "\n";
  os << "total flops: " << rep.total.symbolic() << " = " << format_rational(rep.total_flops()) << "\n";
  os << "flops per param: " << std::setprecision(6) << rep.ratio() << "\n";
  for (const auto& n : rep.notes) os << "note: " << n << "\n";
  return os.str();
}

inline std::string render_csv(const CostReport& rep) {
  std::ostringstream os;
  os << "#format_version=1\n";
  os << "layer,kind,d_in,d_out,params,flops_const,flops_lambda_coeff,lambda,flops\n";
  for (const auto& l : rep.layers) {
    os << l.index << "," << l.kind << "," << l.d_in << "," << l.d_out << "," << l.params << ","
       << format_rational(l.flops.constant) << "," << format_rational(l.flops.lambda_coeff) << ","
       << format_rational(rep.lambda) << "," << format_rational(l.flops.at(rep.lambda)) << "\n";
  }
  os << "total,," << (rep.layers.empty() ? 0 : rep.layers.front().d_in) << ","
     << (rep.layers.empty() ? 0 : rep.layers.back().d_out) << "," << rep.params << ","
     << format_rational(rep.total.constant) << "," << format_rational(rep.total.lambda_coeff) << ","
     << format_rational(rep.lambda) << "," << format_rational(rep.total_flops()) << "\n";
  return os.str();
}

}  // namespace powerkan
