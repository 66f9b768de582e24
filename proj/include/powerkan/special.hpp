#pragma once

// Special functions used as regression targets.
//   bessel_j0:  power series for |x| <= 8, trapezoid rule on
//               (1/pi) int_0^pi cos(x sin t) dt beyond; valid for |x| <= 20.
//   ellipk/e:   complete elliptic integrals K(m), E(m) by the AGM, m < 1.

#include <cmath>
#include <numbers>
#include <string>

#include "powerkan/error.hpp"

namespace powerkan::special {

inline constexpr double kBesselMaxArgument = 20.0;

inline double bessel_j0(double x) {
  const long double ax = std::abs(static_cast<long double>(x));
  if (!std::isfinite(x) || ax > kBesselMaxArgument) {
    throw InputError("bessel_j0: argument " + std::to_string(x) + " outside [-20, 20]");
  }
  if (ax <= 8) {
    const long double q = -ax * ax / 4;
    long double term = 1, sum = 1;
    for (int m = 1; m < 80; ++m) {
      term *= q / (static_cast<long double>(m) * m);
      sum += term;
      if (std::abs(term) < 1e-22L) break;
    }
    return static_cast<double>(sum);
  }
  constexpr int panels = 128;
  const long double h = std::numbers::pi_v<long double> / panels;
  long double sum = 0.5L * (1 + std::cos(ax * std::sin(std::numbers::pi_v<long double>)));
  for (int i = 1; i < panels; ++i) sum += std::cos(ax * std::sin(i * h));
  return static_cast<double>(sum * h / std::numbers::pi_v<long double>);
}

namespace detail {

inline void check_parameter(double m, const char* name) {
  if (!std::isfinite(m) || m >= 1.0) {
    throw InputError(std::string(name) + ": parameter m = " + std::to_string(m) + " must be finite and < 1");
  }
}

}  // namespace detail

/// K(m) = int_0^{pi/2} (1 - m sin^2 t)^{-1/2} dt.
inline double ellipk(double m) {
  detail::check_parameter(m, "ellipk");
  long double a = 1, b = std::sqrt(1.0L - m);
  for (int i = 0; i < 64 && std::abs(a - b) > 1e-19L * a; ++i) {
    const long double an = (a + b) / 2;
    b = std::sqrt(a * b);
    a = an;
  }
  return static_cast<double>(std::numbers::pi_v<long double> / (2 * a));
}

/// E(m) = int_0^{pi/2} (1 - m sin^2 t)^{1/2} dt.
inline double ellipe(double m) {
  detail::check_parameter(m, "ellipe");
  long double a = 1, b = std::sqrt(1.0L - m);
  long double c2 = m;  // c_n^2
  long double pow2 = 0.5L;
  long double sum = pow2 * c2;
  for (int i = 0; i < 64 && std::abs(c2) > 1e-40L; ++i) {
    const long double an = (a + b) / 2;
    const long double cn = (a - b) / 2;
    b = std::sqrt(a * b);
    a = an;
    c2 = cn * cn;
    pow2 *= 2;
    sum += pow2 * c2;
  }
  const long double k = std::numbers::pi_v<long double> / (2 * a);
  return static_cast<double>(k * (1 - sum));
}

}  // namespace powerkan::special
