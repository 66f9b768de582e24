#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "powerkan/spline.hpp"

using namespace powerkan;

namespace {

// k = 3, G = 4 non-uniform grid.
const std::vector<double> kOddKnots{-2.0, -1.3, -0.7, -0.2, 0.1, 0.45, 0.9, 1.4, 2.1, 2.5, 3.2};

KnotGrid random_grid(std::mt19937_64& rng, int k, int g, double min_gap) {
  std::uniform_real_distribution<double> gap(min_gap, 1.0);
  std::uniform_real_distribution<double> start(-3.0, 0.0);
  std::vector<double> t(static_cast<std::size_t>(g + 2 * k + 1));
  t[0] = start(rng);
  for (std::size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] + gap(rng);
  return KnotGrid(k, g, t);
}

}  // namespace

TEST(ReluPow, Values) {
  EXPECT_EQ(relu_pow(3, 2.0), 8.0);
  EXPECT_EQ(relu_pow(4, -1.0), 0.0);
  EXPECT_EQ(relu_pow(0, 0.0), 1.0);
  EXPECT_EQ(relu_pow(0, -1e-300), 0.0);
  EXPECT_EQ(relu_pow(1, 0.0), 0.0);
}

TEST(KnotGrid, Validation) {
  EXPECT_THROW(KnotGrid(1, 2, {0.0, 1.0, 2.0, 3.0}), InputError);
  EXPECT_THROW(KnotGrid(0, 2, {0.0, 1.0, 1.0}), InputError);
  EXPECT_THROW(KnotGrid(0, 2, {0.0, 1.0, 1.0 + 1e-9}), InputError);
  EXPECT_NO_THROW(KnotGrid(0, 2, {0.0, 1.0, 1.0 + 2e-8}));
  EXPECT_THROW(KnotGrid(0, 1, {0.0, NAN}), InputError);
}

TEST(KnotGrid, UniformDefaultAndIndexing) {
  const KnotGrid g = KnotGrid::uniform(3, 5);
  EXPECT_EQ(g.knots().size(), 5u + 7u);
  EXPECT_DOUBLE_EQ(g.knot(-3), -1.0 - 3 * 0.4);
  EXPECT_DOUBLE_EQ(g.lower(), -1.0);
  EXPECT_DOUBLE_EQ(g.upper(), 1.0);
  EXPECT_DOUBLE_EQ(g.knot(8), 1.0 + 3 * 0.4);
  EXPECT_THROW(g.knot(-4), InputError);
  EXPECT_THROW(g.knot(9), InputError);
  EXPECT_EQ(g.basis_count(), 8);
}

TEST(KnotGrid, SymmetricTwoIntervalHasZeroMiddleKnot) {
  for (double e : {0.3, 1.0, 7.77, 123.4}) {
    const KnotGrid g = symmetric_two_interval_grid(3, e);
    EXPECT_EQ(g.knot(1), 0.0);
    EXPECT_DOUBLE_EQ(g.knot(0), -e);
    EXPECT_DOUBLE_EQ(g.knot(2), e);
  }
  EXPECT_THROW(symmetric_two_interval_grid(2, 0.0), NumericError);
  EXPECT_THROW(symmetric_two_interval_grid(2, INFINITY), NumericError);
}

TEST(BsplineRecursive, Examples) {
  const KnotGrid unit(0, 1, {0.0, 1.0});
  EXPECT_EQ(bspline_recursive(unit, 0, 0, 0.5), 1.0);
  EXPECT_EQ(bspline_recursive(unit, 0, 0, 1.0), 0.0);
  const KnotGrid cardinal(3, 1, {-3, -2, -1, 0, 1, 2, 3, 4});
  const std::vector<double> w{0, 1, 2, 3, 4};
  EXPECT_NEAR(bspline_recursive(w, 3, 2.0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(bspline_recursive(cardinal, 0, 3, 2.0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(bspline_recursive(cardinal, 0, 3, -0.5), 0.0);
  EXPECT_THROW(bspline_recursive(cardinal, 1, 3, 0.0), InputError);
  EXPECT_THROW(bspline_recursive(cardinal, -4, 3, 0.0), InputError);
  EXPECT_THROW(bspline_recursive(cardinal, 0, 4, 0.0), InputError);
}

TEST(BsplineRecursive, MatchesFrozenReferenceValues) {
  const KnotGrid g(3, 4, kOddKnots);
  const std::vector<double> xs{-1.0, -0.15, 0.3, 0.77, 1.9};
  const std::vector<std::vector<double>> expected{
      {0.52283827283827278, 0.046502976190476192, 0, 0, 0},
      {0.029220779220779227, 0.59309429248287948, 0.012900143334925951, 0, 0},
      {0, 0.35981998074389376, 0.49958736915258661, 0.0055479797979797974, 0},
      {0, 0.00058275058275058329, 0.46553446553446548, 0.38718087760193015, 0},
      {0, 0, 0.021978021978021973, 0.5608164199348411, 0.0057720057720057841},
      {0, 0, 0, 0.046454722665248992, 0.27723665223665228},
      {0, 0, 0, 0, 0.6268037518037517}};
  std::vector<double> all(7);
  for (int j = -3; j <= 3; ++j) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      EXPECT_NEAR(bspline_recursive(g, j, 3, xs[i]), expected[static_cast<std::size_t>(j + 3)][i], 1e-14)
          << "j=" << j << " x=" << xs[i];
    }
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    bspline_basis_all(g, xs[i], all);
    for (int j = -3; j <= 3; ++j) {
      EXPECT_NEAR(all[static_cast<std::size_t>(j + 3)], expected[static_cast<std::size_t>(j + 3)][i], 1e-14);
    }
  }
}

TEST(BsplineBasisAll, DerivativeMatchesFiniteDifference) {
  const KnotGrid g(3, 4, kOddKnots);
  std::vector<double> v(7), d(7), vp(7), vm(7);
  for (double x : {-0.9, -0.1, 0.33, 1.0, 1.7}) {
    bspline_basis_all(g, x, v, d);
    const double h = 1e-6;
    bspline_basis_all(g, x + h, vp);
    bspline_basis_all(g, x - h, vm);
    for (std::size_t j = 0; j < 7; ++j) EXPECT_NEAR(d[j], (vp[j] - vm[j]) / (2 * h), 1e-7);
  }
}

TEST(PowerForm, Examples) {
  const std::vector<double> w0{0.25, 0.75};
  const auto f0 = power_form_from_window(w0, 0);
  EXPECT_EQ(f0.weights, (std::vector<double>{1.0, -1.0}));
  EXPECT_EQ(eval_power_form(f0, 0.5), 1.0);
  EXPECT_EQ(eval_power_form(f0, 0.0), 0.0);

  const std::vector<double> w1{0, 1, 2};
  const auto f1 = power_form_from_window(w1, 1);
  EXPECT_EQ(f1.weights, (std::vector<double>{1.0, -2.0, 1.0}));

  const std::vector<double> w3{0, 1, 2, 3, 4};
  const auto f3 = power_form_from_window(w3, 3);
  EXPECT_NEAR(eval_power_form(f3, 2.0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(eval_power_form(f3, -1.0), 0.0);
  EXPECT_EQ(f3.breakpoints, w3);
}

TEST(PowerForm, RepeatedKnotsRejected) {
  const std::vector<double> w{0, 1, 1, 2};
  EXPECT_THROW(power_form_from_window(w, 2), InputError);
  const std::vector<double> short_w{0, 1};
  EXPECT_THROW(power_form_from_window(short_w, 2), InputError);
}

TEST(PowerForm, AgreesWithRecursionOnRandomPoints) {
  std::mt19937_64 rng(7);
  const KnotGrid g(3, 4, kOddKnots);
  std::uniform_real_distribution<double> ux(-3.0, 4.0);
  for (int j = -3; j <= 3; ++j) {
    const auto form = bspline_power_form(g, j);
    for (int s = 0; s < 200; ++s) {
      const double x = ux(rng);
      const double ref = bspline_recursive(g, j, 3, x);
      EXPECT_LE(std::abs(eval_power_form(form, x) - ref), 1e-9 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(SplineFunction, Examples) {
  const KnotGrid g(3, 4, kOddKnots);
  EXPECT_THROW(SplineFunction(g, std::vector<double>(6)), InputError);
  const SplineFunction zero(g, std::vector<double>(7, 0.0));
  const SplineFunction ones(g, std::vector<double>(7, 1.0));
  for (double x = g.lower(); x < g.upper(); x += 0.01) {
    EXPECT_EQ(eval_spline(zero, x), 0.0);
    EXPECT_NEAR(eval_spline(ones, x), 1.0, 1e-14);
    EXPECT_NEAR(eval_spline(ones, x, SplineBackend::kPowerForm), 1.0, 1e-12);
  }
  EXPECT_EQ(zero.coeff(-3), 0.0);
  EXPECT_THROW(zero.coeff(4), InputError);
}

TEST(SplineFunction, MatchesFrozenReferenceAndBackendsAgree) {
  const KnotGrid g(3, 4, kOddKnots);
  const SplineFunction s(g, {0.3, -1.2, 0.8, 2.0, -0.5, 1.1, 0.25});
  EXPECT_NEAR(eval_spline(s, -0.15), -0.4087407723616962, 1e-14);
  EXPECT_NEAR(eval_spline(s, 0.3), 1.3042696434000782, 1e-14);
  EXPECT_NEAR(eval_spline(s, 0.77), 0.54949212400659742, 1e-14);
  for (double x = -4.0; x < 5.0; x += 0.013) {
    EXPECT_NEAR(eval_spline(s, x, SplineBackend::kPowerForm), eval_spline(s, x), 1e-11);
  }
  EXPECT_EQ(eval_spline(s, 3.2), 0.0);
  EXPECT_EQ(eval_spline(s, -2.5), 0.0);
}

TEST(AffineSpline, Examples) {
  const KnotGrid g(3, 4, kOddKnots);
  const auto c5 = affine_spline(0.0, 5.0, g);
  for (double c : c5.coeffs()) EXPECT_EQ(c, 5.0);
  for (double x = g.lower(); x <= g.upper(); x += 0.05) EXPECT_NEAR(eval_spline(c5, x), 5.0, 1e-13);

  const KnotGrid lin = KnotGrid::uniform(1, 4);
  const auto id = affine_spline(1.0, 0.0, lin);
  for (int j = -1; j < 4; ++j) EXPECT_DOUBLE_EQ(id.coeff(j), lin.knot(j + 1));
  EXPECT_THROW(affine_spline(1.0, 0.0, KnotGrid::uniform(0, 3)), InputError);
}

TEST(AffineSpline, RandomIdentity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coef(-5.0, 5.0);
  std::uniform_int_distribution<int> kk(1, 5), gg(1, 8);
  for (int trial = 0; trial < 500; ++trial) {
    const KnotGrid g = random_grid(rng, kk(rng), gg(rng), 1e-2);
    const double w = coef(rng), b = coef(rng);
    const auto s = affine_spline(w, b, g);
    const double x = std::uniform_real_distribution<double>(g.lower(), g.upper())(rng);
    const double ref = w * x + b;
    EXPECT_LE(std::abs(eval_spline(s, x) - ref), 1e-10 * (1 + std::abs(ref)));
  }
}

TEST(ReluKSpline, LinearExample) {
  const KnotGrid g(1, 2, {-1.5, -0.6, 0.0, 0.8, 1.7});
  const auto s = reluk_spline(1, g);
  EXPECT_EQ(s.coeff(-1), 0.0);
  EXPECT_EQ(s.coeff(0), 0.0);
  EXPECT_EQ(s.coeff(1), 0.8);
  for (double x = -0.6; x <= 0.8; x += 0.01) EXPECT_NEAR(eval_spline(s, x), relu_pow(1, x), 1e-15);
  EXPECT_EQ(eval_spline(s, g.lower()), 0.0);
}

TEST(ReluKSpline, ShapeChecks) {
  EXPECT_THROW(reluk_spline(2, KnotGrid::uniform(2, 3)), InputError);
  EXPECT_THROW(reluk_spline(2, KnotGrid::uniform(2, 2, -1.0, 2.0)), InputError);
  EXPECT_THROW(reluk_spline(3, KnotGrid::uniform(2, 2)), InputError);
  EXPECT_NO_THROW(reluk_spline(2, KnotGrid::uniform(2, 2)));
}

TEST(ReluKSpline, CubicIdentity) {
  std::mt19937_64 rng(3);
  const KnotGrid g = symmetric_two_interval_grid(3, 1.0);
  const auto s = reluk_spline(3, g);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double x = ux(rng);
    EXPECT_LE(std::abs(eval_spline(s, x) - relu_pow(3, x)), 1e-10);
  }
}

TEST(SplineInvariants, OracleEquivalenceAcrossOrders) {
  std::mt19937_64 rng(5);
  for (int k = 0; k <= 5; ++k) {
    for (int trial = 0; trial < 30; ++trial) {
      const KnotGrid g = random_grid(rng, k, 1 + trial % 6, 1e-3);
      const auto t = g.knots();
      std::uniform_real_distribution<double> ux(t.front() - 1, t.back() + 1);
      for (int j = -k; j < g.grid_count(); ++j) {
        const auto form = bspline_power_form(g, j);
        for (int s = 0; s < 20; ++s) {
          const double x = ux(rng);
          const double diff = std::abs(bspline_recursive(g, j, k, x) - eval_power_form(form, x));
          EXPECT_LE(diff, 1e-9 * std::max(1.0, power_form_condition(form, x)));
        }
      }
    }
  }
}

TEST(SplineInvariants, SupportUnityNonnegativity) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = trial % 6;
    const KnotGrid g = random_grid(rng, k, 1 + trial % 7, 1e-3);
    const auto t = g.knots();
    std::uniform_real_distribution<double> ux(t.front() - 1, t.back() + 1);
    std::uniform_real_distribution<double> inner(g.lower(), g.upper());
    for (int s = 0; s < 20; ++s) {
      const double x = ux(rng);
      for (int j = -k; j < g.grid_count(); ++j) {
        const double b = bspline_recursive(g, j, k, x);
        EXPECT_GE(b, -1e-12);
        const auto w = g.window(j, k);
        if (x < w.front() || x >= w.back()) {
          EXPECT_EQ(b, 0.0);
        }
      }
      const double y = inner(rng);
      double sum = 0;
      for (int j = -k; j < g.grid_count(); ++j) sum += bspline_recursive(g, j, k, y);
      EXPECT_NEAR(sum, 1.0, 1e-10);
    }
  }
}
