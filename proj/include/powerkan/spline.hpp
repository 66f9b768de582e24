#pragma once

// B-splines on (k,G)-grids, evaluated two ways: the de Boor-Cox recursion
// and the truncated-power expansion sum_i w_i * max(0, x - t_i)^k.
//
// Index convention: knots are t_{-k} .. t_{G+k} and spline coefficients are
// c_{-k} .. c_{G-1}. Accessors taking a knot or basis index use these signed
// indices; storage is 0-based with offset k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "powerkan/error.hpp"

namespace powerkan {

/// Knots closer than this are rejected; the power-form weights scale like
/// 1/spacing^(k+1).
inline constexpr double kMinKnotSpacing = 1e-8;

/// sigma_k(x) = max(0, x)^k. For k == 0 this is the unit step with
/// sigma_0(0) == 1.
template <typename Real>
constexpr Real relu_pow(int k, Real x) {
  if (k == 0) return x >= Real(0) ? Real(1) : Real(0);
  if (x <= Real(0)) return Real(0);
  Real r = x;
  for (int i = 1; i < k; ++i) r *= x;
  return r;
}

inline double relu_pow(int k, double x) { return relu_pow<double>(k, x); }

/// Pairwise (cascade) summation; error grows like log(n) instead of n.
template <typename Real>
Real pairwise_sum(std::span<const Real> values) {
  if (values.size() <= 8) {
    Real s = 0;
    for (Real v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace detail {

inline void check_strictly_increasing(std::span<const double> knots) {
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!std::isfinite(knots[i])) {
      throw InputError("knot " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && !(knots[i] - knots[i - 1] >= kMinKnotSpacing)) {
      throw InputError("knots " + std::to_string(i - 1) + " and " + std::to_string(i) +
                       " are not strictly increasing with spacing >= 1e-8");
    }
  }
}

}  // namespace detail

/// A (k,G)-grid: G + 2k + 1 strictly increasing knots t_{-k} .. t_{G+k}.
class KnotGrid {
 public:
  KnotGrid(int order, int grid_count, std::vector<double> knots)
      : order_(order), grid_count_(grid_count), knots_(std::move(knots)) {
    if (order < 0) throw InputError("grid order must be >= 0");
    if (grid_count < 1) throw InputError("grid count must be >= 1");
    if (knots_.size() != static_cast<std::size_t>(grid_count + 2 * order + 1)) {
      throw InputError("knot vector length must be G + 2k + 1 = " +
                       std::to_string(grid_count + 2 * order + 1) + ", got " +
                       std::to_string(knots_.size()));
    }
    detail::check_strictly_increasing(knots_);
  }

  /// G equal intervals on [lo, hi], extended by k knots of the same spacing
  /// on each side.
  static KnotGrid uniform(int order, int grid_count, double lo = -1.0, double hi = 1.0) {
    if (!(hi > lo)) throw InputError("uniform grid needs lo < hi");
    if (grid_count < 1) throw InputError("grid count must be >= 1");
    const double h = (hi - lo) / grid_count;
    std::vector<double> knots(static_cast<std::size_t>(grid_count + 2 * order + 1));
    for (int i = -order; i <= grid_count + order; ++i) {
      knots[static_cast<std::size_t>(i + order)] = lo + i * h;
    }
    return KnotGrid(order, grid_count, std::move(knots));
  }

  int order() const { return order_; }
  int grid_count() const { return grid_count_; }

  /// t_i for i in [-k, G+k].
  double knot(int i) const {
    if (i < -order_ || i > grid_count_ + order_) {
      throw InputError("knot index " + std::to_string(i) + " outside [-k, G+k]");
    }
    return knots_[static_cast<std::size_t>(i + order_)];
  }

  std::span<const double> knots() const { return knots_; }

  /// Number of order-k basis functions (and spline coefficients): G + k.
  int basis_count() const { return grid_count_ + order_; }

  /// [t_0, t_G], where the order-k basis sums to one.
  double lower() const { return knot(0); }
  double upper() const { return knot(grid_count_); }

  /// Window t_j .. t_{j+order+1} supporting B_{j,order}.
  std::span<const double> window(int j, int order) const {
    if (order < 0 || order > order_) throw InputError("B-spline order exceeds grid order");
    if (j < -order_ || j + order + 1 > grid_count_ + order_) {
      throw InputError("B-spline index " + std::to_string(j) + " out of range for order " +
                       std::to_string(order));
    }
    return std::span<const double>(knots_).subspan(static_cast<std::size_t>(j + order_),
                                                   static_cast<std::size_t>(order + 2));
  }

  friend bool operator==(const KnotGrid&, const KnotGrid&) = default;

 private:
  int order_;
  int grid_count_;
  std::vector<double> knots_;
};

/// B_{0,order} on a window of order + 2 knots, by the de Boor-Cox recursion.
inline double bspline_recursive(std::span<const double> window, int order, double x) {
  if (order == 0) return (window[0] <= x && x < window[1]) ? 1.0 : 0.0;
  const double t0 = window[0];
  const double tk = window[static_cast<std::size_t>(order)];
  const double t1 = window[1];
  const double tk1 = window[static_cast<std::size_t>(order + 1)];
  const double left = bspline_recursive(window.first(static_cast<std::size_t>(order + 1)), order - 1, x);
  const double right = bspline_recursive(window.subspan(1), order - 1, x);
  return (x - t0) / (tk - t0) * left + (tk1 - x) / (tk1 - t1) * right;
}

/// B_{j,order,t}(x) per the de Boor-Cox recursion; order <= grid.order().
inline double bspline_recursive(const KnotGrid& grid, int j, int order, double x) {
  return bspline_recursive(grid.window(j, order), order, x);
}

/// All G + k order-k basis values at x (values[j + k] = B_{j,k}(x)); if
/// derivs is non-empty it receives dB_{j,k}/dx. Iterative form of the same
/// recursion, O(k (G + 2k)).
inline void bspline_basis_all(const KnotGrid& grid, double x, std::span<double> values,
                              std::span<double> derivs = {}) {
  const auto t = grid.knots();
  const int k = grid.order();
  const std::size_t intervals = t.size() - 1;
  const auto n = static_cast<std::size_t>(grid.basis_count());
  if (values.size() != n || (!derivs.empty() && derivs.size() != n)) {
    throw InputError("basis buffer size must equal G + k");
  }
  thread_local std::vector<double> table;
  table.assign(intervals, 0.0);
  for (std::size_t i = 0; i < intervals; ++i) table[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;

  for (int d = 1; d <= k; ++d) {
    const auto du = static_cast<std::size_t>(d);
    if (d == k && !derivs.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        derivs[i] = k * (table[i] / (t[i + du] - t[i]) - table[i + 1] / (t[i + du + 1] - t[i + 1]));
      }
    }
    for (std::size_t i = 0; i + du < intervals; ++i) {
      table[i] = (x - t[i]) / (t[i + du] - t[i]) * table[i] +
                 (t[i + du + 1] - x) / (t[i + du + 1] - t[i + 1]) * table[i + 1];
    }
  }
  if (k == 0 && !derivs.empty()) std::fill(derivs.begin(), derivs.end(), 0.0);
  std::copy_n(table.begin(), n, values.begin());
}

/// sum_i weights[i] * sigma_order(x - breakpoints[i]).
struct PowerBasisForm {
  std::vector<double> breakpoints;
  std::vector<double> weights;
  int order = 0;
};

/// Truncated-power expansion of the B-spline on an arbitrary window of
/// order + 2 distinct knots: w_i = (t_last - t_first) / prod_{l != i}(t_l - t_i).
inline PowerBasisForm power_form_from_window(std::span<const double> window, int order) {
  if (order < 0) throw InputError("order must be >= 0");
  if (window.size() != static_cast<std::size_t>(order + 2)) {
    throw InputError("window must hold order + 2 knots");
  }
  for (std::size_t a = 0; a < window.size(); ++a) {
    for (std::size_t b = a + 1; b < window.size(); ++b) {
      if (window[a] == window[b]) {
        throw InputError("repeated knot in B-spline window; truncated-power form needs distinct knots");
      }
    }
  }
  PowerBasisForm form;
  form.order = order;
  form.breakpoints.assign(window.begin(), window.end());
  form.weights.resize(window.size());
  const long double span = static_cast<long double>(window.back()) - window.front();
  for (std::size_t i = 0; i < window.size(); ++i) {
    long double denom = 1;
    for (std::size_t l = 0; l < window.size(); ++l) {
      if (l != i) denom *= static_cast<long double>(window[l]) - window[i];
    }
    form.weights[i] = static_cast<double>(span / denom);
  }
  return form;
}

/// Power form of B_{j,k,t} on the grid's own order.
inline PowerBasisForm bspline_power_form(const KnotGrid& grid, int j) {
  return power_form_from_window(grid.window(j, grid.order()), grid.order());
}

inline double eval_power_form(const PowerBasisForm& form, double x) {
  if (form.breakpoints.size() != form.weights.size()) {
    throw InputError("power form breakpoints and weights differ in length");
  }
  thread_local std::vector<long double> terms;
  terms.resize(form.weights.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const long double shifted = static_cast<long double>(x) - form.breakpoints[i];
    terms[i] = static_cast<long double>(form.weights[i]) * relu_pow<long double>(form.order, shifted);
  }
  return static_cast<double>(pairwise_sum<long double>(terms));
}

/// max_i |weights_i| * |x - t_i|^k, the size of the largest term before
/// cancellation.
inline double power_form_condition(const PowerBasisForm& form, double x) {
  double c = 0;
  for (std::size_t i = 0; i < form.weights.size(); ++i) {
    c = std::max(c, std::abs(form.weights[i]) * std::pow(std::abs(x - form.breakpoints[i]), form.order));
  }
  return c;
}

/// spline(x) = sum_{j=-k}^{G-1} c_j B_{j,k,t}(x).
class SplineFunction {
 public:
  SplineFunction(KnotGrid grid, std::vector<double> coeffs)
      : grid_(std::move(grid)), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != static_cast<std::size_t>(grid_.basis_count())) {
      throw InputError("spline needs G + k = " + std::to_string(grid_.basis_count()) +
                       " coefficients, got " + std::to_string(coeffs_.size()));
    }
  }

  const KnotGrid& grid() const { return grid_; }
  std::span<const double> coeffs() const { return coeffs_; }

  /// c_j for j in [-k, G-1].
  double coeff(int j) const {
    const int k = grid_.order();
    if (j < -k || j >= grid_.grid_count()) throw InputError("coefficient index out of range");
    return coeffs_[static_cast<std::size_t>(j + k)];
  }

 private:
  KnotGrid grid_;
  std::vector<double> coeffs_;
};

enum class SplineBackend { kRecursive, kPowerForm };

/// Collapse sum_j c_j B_j into one truncated-power expansion over all
/// G + 2k + 1 knots. Valid on the whole real line.
inline PowerBasisForm spline_power_form(const SplineFunction& s) {
  const KnotGrid& grid = s.grid();
  const int k = grid.order();
  PowerBasisForm out;
  out.order = k;
  out.breakpoints.assign(grid.knots().begin(), grid.knots().end());
  std::vector<long double> acc(out.breakpoints.size(), 0.0L);
  for (int j = -k; j < grid.grid_count(); ++j) {
    const double c = s.coeff(j);
    if (c == 0.0) continue;
    const PowerBasisForm b = bspline_power_form(grid, j);
    for (std::size_t i = 0; i < b.weights.size(); ++i) {
      acc[static_cast<std::size_t>(j + k) + i] += static_cast<long double>(c) * b.weights[i];
    }
  }
  out.weights.resize(acc.size());
  std::transform(acc.begin(), acc.end(), out.weights.begin(),
                 [](long double v) { return static_cast<double>(v); });
  return out;
}

inline double eval_spline(const SplineFunction& s, double x,
                          SplineBackend backend = SplineBackend::kRecursive) {
  if (backend == SplineBackend::kPowerForm) return eval_power_form(spline_power_form(s), x);
  thread_local std::vector<double> basis;
  basis.resize(static_cast<std::size_t>(s.grid().basis_count()));
  bspline_basis_all(s.grid(), x, basis);
  double sum = 0;
  for (std::size_t i = 0; i < basis.size(); ++i) sum += s.coeffs()[i] * basis[i];
  return sum;
}

/// Spline equal to omega * x + gamma on [t_0, t_G]:
/// c_j = omega * mean(t_{j+1} .. t_{j+k}) + gamma.
inline SplineFunction affine_spline(double omega, double gamma, const KnotGrid& grid) {
  const int k = grid.order();
  if (k < 1) throw InputError("affine spline needs order k >= 1");
  std::vector<double> c(static_cast<std::size_t>(grid.basis_count()));
  for (int j = -k; j < grid.grid_count(); ++j) {
    double mean = 0;
    for (int i = j + 1; i <= j + k; ++i) mean += grid.knot(i);
    mean /= k;
    c[static_cast<std::size_t>(j + k)] = mean * omega + gamma;
  }
  return SplineFunction(grid, std::move(c));
}

/// Spline on a (k,2)-grid with t_1 == 0 equal to sigma_k(x) on [t_0, t_2]:
/// c_j = prod_{l=j+1}^{j+k} sigma_1(t_l).
inline SplineFunction reluk_spline(int k, const KnotGrid& grid) {
  if (k < 1) throw InputError("ReLU-k spline needs k >= 1");
  if (grid.order() != k) throw InputError("ReLU-k spline grid order must equal k");
  if (grid.grid_count() != 2) throw InputError("ReLU-k spline needs a grid with G == 2");
  if (grid.knot(1) != 0.0) throw InputError("ReLU-k spline needs knot t_1 == 0");
  std::vector<double> c(static_cast<std::size_t>(grid.basis_count()));
  for (int j = -k; j < 2; ++j) {
    double prod = 1;
    for (int l = j + 1; l <= j + k; ++l) prod *= relu_pow(1, grid.knot(l));
    c[static_cast<std::size_t>(j + k)] = prod;
  }
  return SplineFunction(grid, std::move(c));
}

/// (k,2)-grid with t_0 = -extent, t_1 = 0, t_2 = extent and k extension
/// knots of spacing extent on each side.
inline KnotGrid symmetric_two_interval_grid(int k, double extent) {
  if (!(extent > 0) || !std::isfinite(extent)) {
    throw NumericError("grid extent must be positive and finite");
  }
  return KnotGrid::uniform(k, 2, -extent, extent);
}

}  // namespace powerkan
