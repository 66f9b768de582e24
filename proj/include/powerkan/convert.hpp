#pragma once

// Conversions between KAN and PowerMLP networks and a sampling verifier.
//
// kan_to_powermlp: every KAN layer n -> m becomes one PowerMLP hidden layer
// with one ReLU-k unit per (edge, knot). omega selects the edge input, gamma
// is minus the knot, beta mixes units with v_qp times the truncated-power
// weights of spline_qp, alpha copies u. A final identity layer closes the net.
//
// powermlp_to_kan: every PowerMLP layer becomes two KAN layers on (k,2)-grids.
// The first realizes omega x + gamma with affine splines and passes x through,
// the second applies ReLU-k splines plus the basis shortcut. Grid extents come
// from interval bounds over the given box.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "powerkan/error.hpp"
#include "powerkan/layers.hpp"
#include "powerkan/spline.hpp"
#include "powerkan/tensor.hpp"

namespace powerkan {

struct BoxDomain {
  std::vector<double> lower;
  std::vector<double> upper;

  static BoxDomain symmetric(std::size_t dim, double extent) {
    return BoxDomain{std::vector<double>(dim, -extent), std::vector<double>(dim, extent)};
  }

  std::size_t dim() const { return lower.size(); }

  void validate() const {
    if (lower.size() != upper.size() || lower.empty()) throw InputError("box: bounds must be non-empty and match");
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i])) {
        throw InputError("box: dimension " + std::to_string(i) + " needs finite lower < upper");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// KAN -> PowerMLP

struct KanToPowerMlpOptions {
  /// Use only the G + k knots t_{-k} .. t_{G-1} per edge. Exact only while
  /// every spline input stays <= t_G; the default uses all G + 2k + 1 knots
  /// and is exact on the whole real line.
  bool compact_width = false;
  std::size_t max_width = std::size_t{1} << 20;
};

inline std::size_t kan_units_per_edge(const KnotGrid& grid, bool compact_width) {
  const auto k = static_cast<std::size_t>(grid.order());
  const auto g = static_cast<std::size_t>(grid.grid_count());
  return compact_width ? g + k : g + 2 * k + 1;
}

inline Network kan_to_powermlp(const Network& kan, const KanToPowerMlpOptions& opt = {}) {
  if (kan.kind != NetworkKind::kKan) throw InputError("kan_to_powermlp: input network is not a KAN");
  kan.validate();
  Network out;
  out.kind = NetworkKind::kPowerMlp;
  out.input_dim = kan.input_dim;
  out.k = kan.k;
  out.seed = kan.seed;
  out.name = kan.name.empty() ? "converted" : kan.name + " -> powermlp";
  for (std::size_t li = 0; li < kan.layers.size(); ++li) {
    const auto& layer = std::get<KanLayer>(kan.layers[li]);
    const std::size_t n = layer.n_in(), m = layer.n_out();
    const std::size_t per_edge = kan_units_per_edge(layer.grid, opt.compact_width);
    const std::size_t units = m * n * per_edge;
    if (units > opt.max_width) {
      throw InputError("kan_to_powermlp: layer " + std::to_string(li) + " needs width " + std::to_string(units) +
                       ", above the cap " + std::to_string(opt.max_width));
    }
    const auto knots = layer.grid.knots();
    PowerMlpLayer pm;
    pm.k = kan.k;
    pm.omega = Tensor(units, n);
    pm.gamma = Tensor(1, units);
    pm.beta = Tensor(m, units);
    pm.alpha = layer.u;
    for (std::size_t q = 0; q < m; ++q) {
      for (std::size_t p = 0; p < n; ++p) {
        const PowerBasisForm form = spline_power_form(layer.spline(q, p));
        const double v = layer.v(q, p);
        for (std::size_t i = 0; i < per_edge; ++i) {
          const std::size_t unit = (q * n + p) * per_edge + i;
          pm.omega(unit, p) = 1.0;
          pm.gamma(0, unit) = -knots[i];
          pm.beta(q, unit) = v * form.weights[i];
        }
      }
    }
    out.layers.emplace_back(std::move(pm));
  }
  const std::size_t m = out.output_dim();
  PowerMlpLayer last;
  last.k = kan.k;
  last.is_final = true;
  last.omega = Tensor(m, m);
  for (std::size_t i = 0; i < m; ++i) last.omega(i, i) = 1.0;
  last.gamma = Tensor(1, m);
  out.layers.emplace_back(std::move(last));
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Interval bounds

struct Interval {
  double lo = 0;
  double hi = 0;

  double magnitude() const { return std::max(std::abs(lo), std::abs(hi)); }
  bool finite() const { return std::isfinite(lo) && std::isfinite(hi); }
};

inline Interval operator+(Interval a, Interval b) { return {a.lo + b.lo, a.hi + b.hi}; }

inline Interval scale(Interval a, double s) {
  return s >= 0 ? Interval{s * a.lo, s * a.hi} : Interval{s * a.hi, s * a.lo};
}

/// Location and value of the minimum of b(x) = x / (1 + e^{-x}).
inline constexpr double kSiluArgmin = -1.2784645427610738;
inline constexpr double kSiluMin = -0.27846454276107380;

inline Interval silu_range(Interval a) {
  const double b_lo = ops::silu(a.lo), b_hi = ops::silu(a.hi);
  Interval r{std::min(b_lo, b_hi), std::max(b_lo, b_hi)};
  if (a.lo <= kSiluArgmin && kSiluArgmin <= a.hi) r.lo = std::min(r.lo, kSiluMin);
  return r;
}

inline Interval relu_pow_range(int k, Interval a) { return {relu_pow(k, a.lo), relu_pow(k, a.hi)}; }

inline std::vector<Interval> affine_range(const Tensor& w, const Tensor& bias, const std::vector<Interval>& x) {
  std::vector<Interval> out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    Interval acc{bias.empty() ? 0.0 : bias(0, r), bias.empty() ? 0.0 : bias(0, r)};
    for (std::size_t c = 0; c < w.cols(); ++c) acc = acc + scale(x[c], w(r, c));
    out[r] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PowerMLP -> KAN

struct PowerMlpToKanOptions {
  /// Relative margin added to every interval bound before sizing a grid.
  double margin = 0.1;
};

namespace detail {

inline double grid_extent(const std::vector<Interval>& ranges, double margin, std::size_t layer_index) {
  double e = 0;
  for (const auto& r : ranges) {
    if (!r.finite()) {
      throw NumericError("powermlp_to_kan: unbounded intermediate value at layer " + std::to_string(layer_index));
    }
    e = std::max(e, r.magnitude());
  }
  e = e == 0 ? 1.0 : e * (1.0 + margin);
  if (!std::isfinite(e)) {
    throw NumericError("powermlp_to_kan: unbounded intermediate value at layer " + std::to_string(layer_index));
  }
  return e;
}

inline void set_edge(KanLayer& layer, std::size_t q, std::size_t p, const SplineFunction& s) {
  auto row = layer.coeffs.row(q * layer.n_in() + p);
  std::copy(s.coeffs().begin(), s.coeffs().end(), row.begin());
}

/// Affine KAN layer realizing rows of omega x + gamma on [-extent, extent]^n,
/// optionally followed by pass-through outputs x_p.
inline KanLayer affine_kan_layer(const Tensor& omega, const Tensor& gamma, int k, double extent, bool pass) {
  const std::size_t units = omega.rows(), n = omega.cols();
  const std::size_t outs = units + (pass ? n : 0);
  const KnotGrid grid = symmetric_two_interval_grid(k, extent);
  KanLayer layer{grid, Tensor(outs, n), Tensor(outs, n),
                 Tensor(outs * n, static_cast<std::size_t>(grid.basis_count()))};
  for (std::size_t q = 0; q < units; ++q) {
    for (std::size_t p = 0; p < n; ++p) {
      const double w = omega(q, p);
      const double g = p == 0 ? gamma(0, q) : 0.0;
      if (w == 0 && g == 0) continue;
      layer.v(q, p) = 1.0;
      set_edge(layer, q, p, affine_spline(w, g, grid));
    }
  }
  if (pass) {
    const SplineFunction identity = affine_spline(1.0, 0.0, grid);
    for (std::size_t p = 0; p < n; ++p) {
      layer.v(units + p, p) = 1.0;
      set_edge(layer, units + p, p, identity);
    }
  }
  return layer;
}

}  // namespace detail

inline Network powermlp_to_kan(const Network& pm, const BoxDomain& box, const PowerMlpToKanOptions& opt = {}) {
  if (pm.kind != NetworkKind::kPowerMlp) throw InputError("powermlp_to_kan: input network is not a PowerMLP");
  pm.validate();
  box.validate();
  if (box.dim() != pm.input_dim) {
    throw InputError("powermlp_to_kan: box has " + std::to_string(box.dim()) + " dimensions, network expects " +
                     std::to_string(pm.input_dim));
  }
  const int k = pm.k;
  Network out;
  out.kind = NetworkKind::kKan;
  out.input_dim = pm.input_dim;
  out.k = k;
  out.seed = pm.seed;
  out.name = pm.name.empty() ? "converted" : pm.name + " -> kan";

  std::vector<Interval> x(box.dim());
  for (std::size_t i = 0; i < box.dim(); ++i) x[i] = {box.lower[i], box.upper[i]};

  for (std::size_t li = 0; li < pm.layers.size(); ++li) {
    const auto& layer = std::get<PowerMlpLayer>(pm.layers[li]);
    const std::vector<Interval> z = affine_range(layer.omega, layer.gamma, x);
    const double e_in = detail::grid_extent(x, opt.margin, li);
    if (layer.is_final) {
      const double e_out = detail::grid_extent(z, opt.margin, li);
      out.layers.emplace_back(detail::affine_kan_layer(layer.omega, layer.gamma, k, e_in, false));
      const std::size_t m = layer.units();
      Tensor eye(m, m);
      for (std::size_t i = 0; i < m; ++i) eye(i, i) = 1.0;
      out.layers.emplace_back(detail::affine_kan_layer(eye, Tensor(1, m), k, e_out, false));
      x = z;
      continue;
    }
    const bool pass = layer.has_basis();
    const std::size_t units = layer.units(), n = layer.n_in(), m = layer.n_out();
    out.layers.emplace_back(detail::affine_kan_layer(layer.omega, layer.gamma, k, e_in, pass));

    const double e_mid = detail::grid_extent(z, opt.margin, li);
    const KnotGrid grid = symmetric_two_interval_grid(k, e_mid);
    const std::size_t n_mid = units + (pass ? n : 0);
    KanLayer second{grid, Tensor(m, n_mid), Tensor(m, n_mid),
                    Tensor(m * n_mid, static_cast<std::size_t>(grid.basis_count()))};
    const SplineFunction ramp = reluk_spline(k, grid);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t q = 0; q < units; ++q) {
        const double w = layer.beta.empty() ? (r == q ? 1.0 : 0.0) : layer.beta(r, q);
        if (w == 0) continue;
        second.v(r, q) = w;
        detail::set_edge(second, r, q, ramp);
      }
      for (std::size_t p = 0; p < (pass ? n : 0); ++p) second.u(r, units + p) = layer.alpha(r, p);
    }
    out.layers.emplace_back(std::move(second));

    std::vector<Interval> next(m, Interval{});
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t q = 0; q < units; ++q) {
        const double w = layer.beta.empty() ? (r == q ? 1.0 : 0.0) : layer.beta(r, q);
        if (w != 0) next[r] = next[r] + scale(relu_pow_range(k, z[q]), w);
      }
      for (std::size_t p = 0; p < (pass ? n : 0); ++p) {
        next[r] = next[r] + scale(silu_range(x[p]), layer.alpha(r, p));
      }
    }
    x = std::move(next);
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Verification

struct EquivalenceReport {
  std::size_t samples = 0;
  double max_abs_deviation = 0;
  std::vector<double> argmax;
  double max_abs_output = 0;
  double tolerance = 0;
  bool scaled = false;  ///< verdict uses tolerance * (1 + max_abs_output)
  bool passed = false;
};

struct VerifyOptions {
  bool scale_by_output = false;
  bool include_corners = true;
  std::size_t batch = 2048;
};

/// Radical-inverse point `index` of the Halton sequence in `dim` dimensions.
inline std::vector<double> halton_point(std::size_t index, std::size_t dim) {
  static constexpr std::array<unsigned, 32> primes{2,  3,  5,  7,  11, 13, 17, 19, 23,  29,  31,
                                                   37, 41, 43, 47, 53, 59, 61, 67, 71,  73,  79,
                                                   83, 89, 97, 101, 103, 107, 109, 113, 127, 131};
  if (dim > primes.size()) throw InputError("halton_point: at most 32 dimensions");
  std::vector<double> out(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const unsigned base = primes[d];
    double f = 1.0, r = 0.0;
    for (std::size_t i = index; i > 0; i /= base) {
      f /= base;
      r += f * static_cast<double>(i % base);
    }
    out[d] = r;
  }
  return out;
}

/// Sample points inside the box: Halton points 1..samples plus the 2^n corners.
inline Tensor box_samples(const BoxDomain& box, std::size_t samples, bool corners) {
  box.validate();
  const std::size_t n = box.dim();
  const std::size_t n_corners = (corners && n <= 16) ? (std::size_t{1} << n) : 0;
  Tensor pts(samples + n_corners, n);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto h = halton_point(s + 1, n);
    for (std::size_t d = 0; d < n; ++d) pts(s, d) = box.lower[d] + h[d] * (box.upper[d] - box.lower[d]);
  }
  for (std::size_t c = 0; c < n_corners; ++c) {
    for (std::size_t d = 0; d < n; ++d) pts(samples + c, d) = ((c >> d) & 1U) ? box.upper[d] : box.lower[d];
  }
  return pts;
}

inline EquivalenceReport verify_equivalence(const Network& a, const Network& b, const BoxDomain& box,
                                            std::size_t samples, double tol, const VerifyOptions& opt = {}) {
  if (a.input_dim != b.input_dim) throw InputError("verify: networks differ in input dimension");
  if (a.output_dim() != b.output_dim()) throw InputError("verify: networks differ in output dimension");
  if (box.dim() != a.input_dim) throw InputError("verify: box dimension does not match the networks");
  const Tensor pts = box_samples(box, samples, opt.include_corners);
  EquivalenceReport rep;
  rep.samples = pts.rows();
  rep.tolerance = tol;
  rep.scaled = opt.scale_by_output;
  rep.argmax.assign(pts.cols(), 0.0);
  bool nan_seen = false;
  const std::size_t batch = std::max<std::size_t>(1, opt.batch);
  for (std::size_t start = 0; start < pts.rows(); start += batch) {
    const std::size_t rows = std::min(batch, pts.rows() - start);
    Tensor x(rows, pts.cols());
    std::copy_n(pts.row(start).begin(), rows * pts.cols(), x.data().begin());
    const Tensor ya = network_forward(a, x);
    const Tensor yb = network_forward(b, x);
    for (std::size_t s = 0; s < rows; ++s) {
      for (std::size_t c = 0; c < ya.cols(); ++c) {
        const double dev = std::abs(ya(s, c) - yb(s, c));
        rep.max_abs_output = std::max({rep.max_abs_output, std::abs(ya(s, c)), std::abs(yb(s, c))});
        if (std::isnan(dev)) nan_seen = true;
        if (dev > rep.max_abs_deviation || (std::isnan(dev) && !std::isnan(rep.max_abs_deviation))) {
          rep.max_abs_deviation = dev;
          const auto r = x.row(s);
          rep.argmax.assign(r.begin(), r.end());
        }
      }
    }
  }
  const double limit = opt.scale_by_output ? tol * (1.0 + rep.max_abs_output) : tol;
  rep.passed = !nan_seen && rep.max_abs_deviation <= limit;
  return rep;
}

}  // namespace powerkan
