#include <gtest/gtest.h>

#include "powerkan/flops.hpp"
#include "powerkan/model_spec.hpp"

using namespace powerkan;

TEST(FlopsLayer, Examples) {
  EXPECT_EQ(flops_network(NetworkKind::kMlp, {2, 6, 1}).at(Rational(5)), Rational(36));
  EXPECT_EQ(flops_layer(CostKind::kDense, 2, 6).constant, Rational(24));
  EXPECT_EQ(flops_layer(CostKind::kDense, 6, 1).constant, Rational(12));
  EXPECT_EQ(flops_layer(CostKind::kKan, 2, 1, 3, 3).at(Rational(0)), Rational(408));
  EXPECT_EQ(flops_layer(CostKind::kPowerMlpHidden, 2, 4, 3).at(Rational(0)), Rational(40));
  EXPECT_EQ(flops_layer(CostKind::kPowerMlpHidden, 2, 4, 3).lambda_coeff, Rational(2));
  EXPECT_EQ(flops_layer(CostKind::kAffine, 4, 1).constant, Rational(8));
  EXPECT_THROW(flops_layer(CostKind::kDense, 0, 3), InputError);
}

TEST(FlopsLayer, HalfIntegerCoefficientsStayExact) {
  const Cost c = flops_layer(CostKind::kKan, 1, 1, 1, 1);
  // 9 + 13.5 + 2 - 2.5 + 3
  EXPECT_EQ(c.constant, Rational(25));
  const Cost odd = flops_layer(CostKind::kKan, 1, 1, 3, 2);
  EXPECT_EQ(odd.constant, Rational(54) + Rational(243, 2) + 4 - Rational(15, 2) + 3);
  EXPECT_EQ(odd.constant.denominator(), 1);
}

TEST(FlopsNetwork, ReferenceShapes) {
  const Cost kan = flops_network(NetworkKind::kKan, {2, 1, 1}, 3, 3);
  EXPECT_EQ(kan.constant, Rational(612));
  EXPECT_EQ(kan.lambda_coeff, Rational(3));
  const Cost pm = flops_network(NetworkKind::kPowerMlp, {2, 4, 1}, 3);
  EXPECT_EQ(pm.constant, Rational(48));
  EXPECT_EQ(pm.lambda_coeff, Rational(2));
  EXPECT_EQ(kan.symbolic(), "612 + 3*lambda");
}

TEST(CostReport, TotalsMatchLayersAndShapeFormula) {
  for (const char* s : {"kan:[2,1,1]:k=3:G=3", "powermlp:[2,4,1]:k=3", "mlp:[2,6,1]", "powermlp:[3,5,5,2]:k=2",
                        "powermlp:[3,5,5,2]:k=2:basis=0", "kan:[4,3,2]:k=2:G=5"}) {
    const ModelSpec spec = parse_model_spec(s);
    const Network net = build_network(spec, 1);
    const CostReport rep = cost_report(net, Rational(7, 2));
    Cost sum;
    std::size_t params = 0;
    for (const auto& l : rep.layers) {
      sum += l.flops;
      params += l.params;
      EXPECT_GE(l.flops.at(rep.lambda), Rational(0));
    }
    EXPECT_EQ(sum, rep.total) << s;
    EXPECT_EQ(params, rep.params) << s;
    EXPECT_EQ(rep.params, parameter_count(spec)) << s;
    EXPECT_EQ(rep.total, flops_network(spec.kind, spec.dims, spec.k, spec.grid_count, spec.basis)) << s;
  }
  EXPECT_THROW(cost_report(make_mlp({2, 1}, 1), Rational(-1)), InputError);
}

TEST(Ratios, Asymptotic) {
  EXPECT_EQ(asymptotic_ratio_exact(NetworkKind::kMlp), Rational(2));
  EXPECT_EQ(asymptotic_ratio_exact(NetworkKind::kPowerMlp, 3), Rational(2));
  EXPECT_EQ(asymptotic_ratio_exact(NetworkKind::kKan, 3, 3), Rational(51, 2));
  EXPECT_NEAR(asymptotic_ratio(NetworkKind::kKan, 3, 3), 25.5, 1e-12);
  for (int k = 3; k <= 5; ++k) {
    for (int g = 3; g <= 10; ++g) EXPECT_GT(asymptotic_ratio(NetworkKind::kKan, k, g), 20.0);
  }
  const std::vector<std::size_t> big{2000, 2000, 2000};
  EXPECT_NEAR(ratio(NetworkKind::kMlp, big, 0, 0), 2.0, 1e-2);
  EXPECT_NEAR(ratio(NetworkKind::kPowerMlp, big, 3, 0), 2.0, 1e-2);
  EXPECT_NEAR(ratio(NetworkKind::kKan, big, 3, 3), 25.5, 1e-2);
  EXPECT_THROW(ratio(NetworkKind::kMlp, big, 0, 0, -1.0), InputError);
}

TEST(MatchParamBudget, ReferenceShapes) {
  EXPECT_EQ(match_param_budget(25, NetworkKind::kPowerMlp, 2, 3, 0, 2, 1), (std::vector<std::size_t>{2, 4, 1}));
  EXPECT_EQ(match_param_budget(25, NetworkKind::kMlp, 2, 0, 0, 2, 1), (std::vector<std::size_t>{2, 6, 1}));
  EXPECT_EQ(match_param_budget(24, NetworkKind::kKan, 2, 3, 3, 2, 1), (std::vector<std::size_t>{2, 1, 1}));
  EXPECT_THROW(match_param_budget(30, NetworkKind::kKan, 2, 3, 3, 2, 1), InputError);
}

TEST(MatchParamBudget, SmallestWidthWithinFivePercent) {
  for (std::size_t target : {100u, 400u, 1000u, 5000u}) {
    for (auto kind : {NetworkKind::kMlp, NetworkKind::kPowerMlp}) {
      std::size_t first = 0;
      for (std::size_t w = 1; w <= 200 && first == 0; ++w) {
        const auto c = static_cast<double>(parameter_count(kind, {4, w, w, 2}, 3, 0));
        if (c >= 0.95 * static_cast<double>(target) && c <= 1.05 * static_cast<double>(target)) first = w;
      }
      if (first == 0) {
        EXPECT_THROW(match_param_budget(target, kind, 3, 3, 0, 4, 2), InputError) << target;
        continue;
      }
      const auto dims = match_param_budget(target, kind, 3, 3, 0, 4, 2);
      EXPECT_EQ(dims, (std::vector<std::size_t>{4, first, first, 2})) << target;
      const auto count = static_cast<double>(parameter_count(kind, dims, 3, 0));
      EXPECT_GE(count, 0.95 * static_cast<double>(target));
      EXPECT_LE(count, 1.05 * static_cast<double>(target));
    }
  }
  EXPECT_EQ(match_param_budget(400, NetworkKind::kMlp, 3, 0, 0, 4, 2).size(), 4u);
}

TEST(ReferenceNote, ExplainsMismatch) {
  const auto kan = reference_note(NetworkKind::kKan, {2, 1, 1}, 3, 3);
  ASSERT_TRUE(kan.has_value());
  EXPECT_NE(kan->find("564"), std::string::npos);
  EXPECT_NE(kan->find("612 + 3*lambda"), std::string::npos);
  EXPECT_NE(kan->find("does not match"), std::string::npos);
  const auto pm = reference_note(NetworkKind::kPowerMlp, {2, 4, 1}, 3, 0);
  ASSERT_TRUE(pm.has_value());
  EXPECT_NE(pm->find("48 + 2*lambda"), std::string::npos);
  EXPECT_NE(pm->find("does not match"), std::string::npos);
  const auto mlp = reference_note(NetworkKind::kMlp, {2, 6, 1}, 0, 0);
  ASSERT_TRUE(mlp.has_value());
  EXPECT_NE(mlp->find("agrees"), std::string::npos);
  EXPECT_FALSE(reference_note(NetworkKind::kMlp, {2, 7, 1}, 0, 0).has_value());
}

TEST(Render, TableAndCsv) {
  const CostReport rep = cost_report(build_network(parse_model_spec("powermlp:[2,4,1]:k=3"), 1));
  const std::string table = render_table(rep);
  EXPECT_NE(table.find("total params: 25"), std::string::npos);
  EXPECT_NE(table.find("48 + 2*lambda = 58"), std::string::npos);
  const std::string csv = render_csv(rep);
  EXPECT_EQ(csv.rfind("#format_version=1\n", 0), 0u);
  EXPECT_NE(csv.find("total,,2,1,25,48,2,5,58"), std::string::npos);
}

TEST(FlopsLayer, ExplicitBetaForm) {
  Network pm = make_powermlp({2, 3, 1}, 3, 1);
  auto& l = std::get<PowerMlpLayer>(pm.layers[0]);
  l.beta = Tensor(2, 3, 1.0);
  // 2nH + (k-1)H + 2Hm - m + 2nm + lambda n with n=2, H=3, m=2
  const Cost c = flops_layer(Layer(l));
  EXPECT_EQ(c.constant, Rational(12 + 6 + 12 - 2 + 8));
  EXPECT_EQ(c.lambda_coeff, Rational(2));
}
