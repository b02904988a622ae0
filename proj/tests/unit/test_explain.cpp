#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "macrocast/error.hpp"
#include "macrocast/explain.hpp"
#include "macrocast/roster.hpp"
#include "support/oracles.hpp"
#include "support/panels.hpp"
#include "support/testgen.hpp"

namespace mc = macrocast;
using mc::QuarterDate;

namespace {

std::span<const double> span_of(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

mc::BatchPredictor rowwise(std::function<double(const Eigen::RowVectorXd&)> g) {
  return [g](const Eigen::MatrixXd& x) {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = g(x.row(i));
    return out;
  };
}

// Depth-3 tree over d = 8 inputs, written by hand.
double tree8(const Eigen::RowVectorXd& z) {
  if (z(0) <= 0.0) {
    if (z(3) <= 0.5) return z(5) <= -0.2 ? 1.0 : 2.5;
    return z(1) <= 0.0 ? -1.0 : 0.5;
  }
  if (z(6) <= 0.1) return z(2) <= 0.3 ? 3.0 : -2.0;
  return z(7) <= 0.0 ? 0.0 : 4.0;
}

mc::Attribution attr(const std::string& model, QuarterDate q, std::vector<std::string> names, std::vector<double> phi,
                     std::vector<double> values = {}) {
  mc::Attribution a;
  a.model_id = model;
  a.target_date = q;
  a.features = std::move(names);
  a.phi = std::move(phi);
  a.feature_values = values.empty() ? std::vector<double>(a.phi.size(), 0.0) : std::move(values);
  return a;
}

}  // namespace

TEST(Exact, LinearModelSingleBackground) {
  testgen::Gen g(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = g.integer(1, 10);
    const Eigen::VectorXd w = g.vector(d), x = g.vector(d);
    const Eigen::MatrixXd bg = g.matrix(1, d);
    const auto a = mc::shapley_exact(rowwise([&](const Eigen::RowVectorXd& z) { return z.dot(w); }), span_of(x), bg);
    for (int j = 0; j < d; ++j) EXPECT_NEAR(a.phi[static_cast<std::size_t>(j)], w(j) * (x(j) - bg(0, j)), 1e-12);
    EXPECT_NEAR(a.base_value, bg.row(0).dot(w), 1e-12);
    EXPECT_TRUE(a.exact);
  }
}

TEST(Exact, NullPlayerAndSymmetry) {
  testgen::Gen g(2);
  Eigen::VectorXd x = g.vector(5);
  Eigen::MatrixXd bg = g.matrix(6, 5);
  x(3) = x(1);
  bg.col(3) = bg.col(1);
  // features 1 and 3 enter symmetrically, feature 4 is never read
  auto f = [](const Eigen::RowVectorXd& z) { return std::max(z(1), z(3)) * z(0) + std::sin(z(2)) + z(1) * z(3); };
  const auto a = mc::shapley_exact(rowwise(f), span_of(x), bg);
  EXPECT_NEAR(a.phi[1], a.phi[3], 1e-12);
  EXPECT_EQ(a.phi[4], 0.0);
}

TEST(Exact, DepthTwoTreeMatchesEnumerationOracle) {
  testgen::Gen g(3);
  auto f = [](const Eigen::RowVectorXd& z) {
    if (z(0) <= 0.2) return z(1) <= -0.1 ? 1.5 : -0.5;
    return z(2) <= 0.4 ? 2.0 : 0.25;
  };
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::VectorXd x = g.vector(3);
    const Eigen::MatrixXd bg = g.matrix(4, 3);
    const auto a = mc::shapley_exact(rowwise(f), span_of(x), bg);
    const auto oracle = oracle::shapley_enumerate(f, x, bg);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(a.phi[static_cast<std::size_t>(j)], oracle[static_cast<std::size_t>(j)], 1e-12);
  }
}

TEST(Exact, EfficiencyAndLinearityOverRandomModels) {
  testgen::Gen g(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = g.integer(2, 9);
    const Eigen::VectorXd x = g.vector(d), w = g.vector(d);
    const Eigen::MatrixXd bg = g.matrix(g.integer(1, 12), d);
    auto f1 = [w](const Eigen::RowVectorXd& z) { return std::tanh(z.dot(w)) * z(0); };
    auto f2 = [](const Eigen::RowVectorXd& z) { return z(z.size() - 1) > 0 ? z(0) * z(1) : 1.0; };
    const auto a1 = mc::shapley_exact(rowwise(f1), span_of(x), bg);
    const auto a2 = mc::shapley_exact(rowwise(f2), span_of(x), bg);
    const auto a12 = mc::shapley_exact(rowwise([&](const Eigen::RowVectorXd& z) { return f1(z) + f2(z); }), span_of(x), bg);
    EXPECT_NEAR(a1.reconstructed(), a1.prediction, 1e-9);
    EXPECT_NEAR(a1.prediction, f1(x.transpose()), 1e-12);
    for (int j = 0; j < d; ++j) {
      const auto k = static_cast<std::size_t>(j);
      EXPECT_NEAR(a12.phi[k], a1.phi[k] + a2.phi[k], 1e-12);
    }
  }
}

TEST(Exact, TooManyFeaturesPointsToSampling) {
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(15);
  try {
    mc::shapley_exact(rowwise([](const Eigen::RowVectorXd&) { return 0.0; }), span_of(x), Eigen::MatrixXd::Zero(1, 15));
    FAIL();
  } catch (const mc::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("14"), std::string::npos);
  }
}

TEST(Exact, FittedTreeModelThroughPredictor) {
  testgen::Gen g(5);
  mc::Dataset ds;
  ds.features = g.matrix(40, 4);
  ds.targets = ds.features.col(0).array().sign().matrix() + 0.5 * ds.features.col(2);
  ds.feature_names = {"a_lag0", "b_lag0", "c_lag0", "d_lag0"};
  mc::ModelSpec spec;
  spec.family = mc::Family::RandomForest;
  spec.hp.n_trees = 5;
  spec.hp.max_depth = 2;
  const auto model = mc::fit_model(spec, ds);
  const auto f = mc::predictor_of(model);
  const Eigen::VectorXd x = g.vector(4);
  const Eigen::MatrixXd bg = ds.features.topRows(6);
  const auto a = mc::shapley_exact(f, span_of(x), bg, ds.feature_names);
  auto scalar = [&](const Eigen::RowVectorXd& z) { return model.predict(std::span<const double>(z.data(), 4)); };
  const auto oracle = oracle::shapley_enumerate(scalar, x, bg);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.phi[static_cast<std::size_t>(j)], oracle[static_cast<std::size_t>(j)], 1e-12);
  EXPECT_NEAR(a.reconstructed(), a.prediction, 1e-9);
  EXPECT_EQ(a.features[2], "c_lag0");
}

TEST(Sampled, LinearModelWithinThreeStandardErrors) {
  testgen::Gen g(6);
  const int d = 10;
  const Eigen::VectorXd w = g.vector(d), x = g.vector(d);
  const Eigen::MatrixXd bg = g.matrix(16, d);
  auto f = rowwise([&](const Eigen::RowVectorXd& z) { return z.dot(w); });
  const auto exact = mc::shapley_exact(f, span_of(x), bg);
  const auto s = mc::shapley_sampled(f, span_of(x), bg, 256, 9);
  EXPECT_FALSE(s.exact);
  for (int j = 0; j < d; ++j) {
    const auto k = static_cast<std::size_t>(j);
    EXPECT_LE(std::fabs(s.phi[k] - exact.phi[k]), 3 * s.se[k] + 1e-12) << j;
  }
  EXPECT_NEAR(s.reconstructed(), s.prediction, 1e-9);
}

TEST(Sampled, TreeModelCloseToExact) {
  testgen::Gen g(7);
  const Eigen::VectorXd x = g.vector(8);
  const Eigen::MatrixXd bg = g.matrix(32, 8);
  const auto f = rowwise(tree8);
  const auto exact = mc::shapley_exact(f, span_of(x), bg);
  const auto s = mc::shapley_sampled(f, span_of(x), bg, 4096, 3);
  const auto preds = f(bg);
  const double range = std::max(preds.maxCoeff(), tree8(x.transpose())) - std::min(preds.minCoeff(), tree8(x.transpose()));
  for (int j = 0; j < 8; ++j) {
    const auto k = static_cast<std::size_t>(j);
    EXPECT_LE(std::fabs(s.phi[k] - exact.phi[k]), 0.02 * range) << j;
  }
  EXPECT_LE(std::fabs(s.reconstructed() - s.prediction), 0.05 * range);
}

TEST(Sampled, ConstantModel) {
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(20, -1, 1);
  testgen::Gen g(8);
  const auto s = mc::shapley_sampled(rowwise([](const Eigen::RowVectorXd&) { return 2.5; }), span_of(x), g.matrix(8, 20), 64, 1);
  EXPECT_EQ(s.base_value, 2.5);
  for (double p : s.phi) EXPECT_EQ(p, 0.0);
}

TEST(Sampled, DeterministicInSeed) {
  testgen::Gen g(9);
  const Eigen::VectorXd x = g.vector(8);
  const Eigen::MatrixXd bg = g.matrix(10, 8);
  const auto a = mc::shapley_sampled(rowwise(tree8), span_of(x), bg, 128, 42);
  const auto b = mc::shapley_sampled(rowwise(tree8), span_of(x), bg, 128, 42);
  const auto c = mc::shapley_sampled(rowwise(tree8), span_of(x), bg, 128, 43);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.se, b.se);
  EXPECT_NE(a.phi, c.phi);
  EXPECT_THROW(mc::shapley_sampled(rowwise(tree8), span_of(x), bg, 32, 1), mc::ConfigError);
}

TEST(Sampled, UnbiasedOverSeeds) {
  testgen::Gen g(10);
  const Eigen::VectorXd x = g.vector(8);
  const Eigen::MatrixXd bg = g.matrix(8, 8);
  const auto f = rowwise(tree8);
  const auto exact = mc::shapley_exact(f, span_of(x), bg);
  const int seeds = 200;
  std::vector<double> mean(8, 0.0), se(8, 0.0);
  for (int s = 0; s < seeds; ++s) {
    const auto a = mc::shapley_sampled(f, span_of(x), bg, 64, 1000 + static_cast<std::uint64_t>(s));
    for (std::size_t k = 0; k < 8; ++k) {
      mean[k] += a.phi[k] / seeds;
      se[k] += a.se[k] / seeds;
    }
  }
  for (std::size_t k = 0; k < 8; ++k) EXPECT_LE(std::fabs(mean[k] - exact.phi[k]), 3 * se[k] / std::sqrt(seeds) + 1e-12) << k;
}

TEST(Auto, SwitchesOnFeatureCount) {
  testgen::Gen g(11);
  auto f = rowwise([](const Eigen::RowVectorXd& z) { return z.sum(); });
  const Eigen::VectorXd small = g.vector(14), big = g.vector(15);
  EXPECT_TRUE(mc::shapley_auto(f, span_of(small), g.matrix(2, 14), 1).exact);
  EXPECT_FALSE(mc::shapley_auto(f, span_of(big), g.matrix(2, 15), 1, {}, 64).exact);
}

TEST(Background, SubsetWithoutReplacementInOrder) {
  Eigen::MatrixXd rows(300, 1);
  for (int i = 0; i < 300; ++i) rows(i, 0) = i;
  const auto bg = mc::select_background(rows, 128, 5);
  ASSERT_EQ(bg.rows(), 128);
  for (Eigen::Index i = 1; i < bg.rows(); ++i) EXPECT_LT(bg(i - 1, 0), bg(i, 0));
  EXPECT_EQ(mc::select_background(rows, 128, 5), bg);
  EXPECT_EQ(mc::select_background(rows.topRows(20), 128, 5).rows(), 20);
}

TEST(Importance, ParentVariables) {
  EXPECT_EQ(mc::parent_variable("Imports_lag1"), "Imports");
  EXPECT_EQ(mc::parent_variable("y_lag3"), "y");
  EXPECT_EQ(mc::parent_variable("F2_lag0"), "F2");
  EXPECT_EQ(mc::parent_variable("plain"), "plain");
  EXPECT_EQ(mc::parent_variable("a_lag_b_lag12"), "a_lag_b");
}

TEST(Importance, AbsoluteValueAndCancellation) {
  const mc::PeriodSlice all{"all", {2000, 1}, {2000, 4}};
  auto rows = mc::aggregate_importance({attr("M", {2000, 1}, {"v_lag0"}, {-0.4})}, {all});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].value, 0.4, 1e-15);
  EXPECT_EQ(rows[0].variable, "v");
  rows = mc::aggregate_importance({attr("M", {2000, 1}, {"Imports_lag0", "Imports_lag1"}, {0.3, -0.3})}, {all});
  EXPECT_NEAR(rows[0].value, 0.0, 1e-15);
}

TEST(Importance, TopFlagsAndRenaming) {
  testgen::Gen g(12);
  const mc::PeriodSlice all{"all", {2000, 1}, {2010, 4}};
  std::vector<mc::Attribution> as;
  std::vector<std::string> names = {"y_lag1"};
  for (int v = 0; v < 8; ++v) names.push_back("V" + std::to_string(v) + "_lag0");
  for (const char* m : {"A", "B"}) {
    for (int t = 0; t < 12; ++t) {
      std::vector<double> phi;
      for (std::size_t k = 0; k < names.size(); ++k) phi.push_back(g.normal() * (k == 4 ? 10.0 : 1.0));
      as.push_back(attr(m, QuarterDate{2000, 1}.plus(t), names, phi));
    }
  }
  const auto rows = mc::aggregate_importance(as, {all}, {}, 5, {{"y", "GDP"}});
  for (const char* m : {"A", "B"}) {
    int flagged = 0;
    for (const auto& r : rows) {
      if (r.model_id != m) continue;
      EXPECT_NE(r.variable, "y");
      EXPECT_GE(r.value, 0.0);
      EXPECT_EQ(r.n_instances, 12);
      flagged += r.top;
      EXPECT_EQ(r.top, r.rank <= 5);
      if (r.variable == "V3") EXPECT_EQ(r.rank, 1);
    }
    EXPECT_EQ(flagged, 5);
  }
  EXPECT_THROW(mc::aggregate_importance(as, {all}, {"V0"}), mc::DataError);
}

// Planted dominant variable: every model's attributions come from exact
// Shapley values of a model driven mostly by one input.
TEST(Importance, PlantedDominantVariableIsTopOne) {
  testgen::Gen g(13);
  const std::vector<std::string> names = {"A_lag0", "B_lag0", "C_lag0"};
  const Eigen::MatrixXd bg = g.matrix(16, 3);
  std::vector<mc::Attribution> as;
  const std::vector<std::function<double(const Eigen::RowVectorXd&)>> models = {
      [](const Eigen::RowVectorXd& z) { return 0.2 * z(0) + 3.0 * z(1) + 0.1 * z(2); },
      [](const Eigen::RowVectorXd& z) { return z(1) > 0 ? 4.0 + 0.1 * z(0) : -4.0 + 0.2 * z(2); },
      [](const Eigen::RowVectorXd& z) { return std::tanh(z(1)) * 5.0 + 0.3 * z(0) * z(2); }};
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd x = g.vector(3);
      auto a = mc::shapley_exact(rowwise(models[m]), span_of(x), bg, names);
      a.model_id = "M" + std::to_string(m);
      a.target_date = QuarterDate{2000, 1}.plus(t);
      as.push_back(a);
    }
  }
  const auto rows = mc::aggregate_importance(as, {{"all", {2000, 1}, {2010, 4}}}, {"A", "B", "C"}, 1);
  for (const auto& r : rows) EXPECT_EQ(r.top, r.variable == "B") << r.model_id << " " << r.variable;
}

TEST(Dependence, SilvermanBandwidth) {
  std::vector<double> x(100);
  std::iota(x.begin(), x.end(), 0.0);
  // sd = sqrt(n(n+1)/12) with n = 100 points spaced 1 -> 29.01; IQR/1.34 = 49.5/1.34 = 36.9
  const double sd = std::sqrt(100.0 * 101.0 / 12.0);
  EXPECT_NEAR(mc::silverman_bandwidth(x), 0.9 * sd * std::pow(100.0, -0.2), 1e-12);
}

TEST(Dependence, LinearAndFlatRelations) {
  std::vector<double> x, up, flat;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i * 0.25 - 5);
    up.push_back(2.0 * x.back() - 1);
    flat.push_back(0.7);
  }
  const std::vector<double> at = {-4, -1, 0, 2, 4};
  const double h = mc::silverman_bandwidth(x);
  const auto a = mc::local_linear(x, up, at, h);
  const auto b = mc::local_linear(x, flat, at, h);
  for (std::size_t i = 0; i < at.size(); ++i) {
    EXPECT_NEAR(a[i].y, 2.0 * at[i] - 1, 1e-9);
    EXPECT_NEAR(b[i].y, 0.7, 1e-12);
  }
  EXPECT_GT(a.back().y, a.front().y);
}

TEST(Dependence, NoisyQuadraticStaysInBand) {
  testgen::Gen g(14);
  std::vector<double> x, y;
  for (int i = 0; i < 400; ++i) {
    x.push_back(g.uniform(-2, 2));
    y.push_back(x.back() * x.back() + 0.1 * g.normal());
  }
  const std::vector<double> at = {-1.0, -0.5, 0.0, 0.5, 1.0};
  const auto c = mc::local_linear(x, y, at, mc::silverman_bandwidth(x));
  // local linear bias is about h^2 f''/2 = h^2 for this curve
  const double h = mc::silverman_bandwidth(x);
  for (std::size_t i = 0; i < at.size(); ++i) EXPECT_NEAR(c[i].y, at[i] * at[i], h * h + 0.05) << at[i];
}

TEST(Dependence, CurveFromAttributions) {
  std::vector<mc::Attribution> as;
  for (int t = 0; t < 10; ++t) {
    const double v = t - 4.5;
    as.push_back(attr("M", QuarterDate{2001, 1}.plus(9 - t), {"y_lag1", "X_lag0", "X_lag1"}, {1.0, 0.5 * v, 0.25 * v},
                      {0.0, v, 99.0}));
  }
  const auto c = mc::dependence_curve(as, "X", 20);
  ASSERT_EQ(c.points.size(), 10u);
  EXPECT_EQ(c.smooth.size(), 20u);
  for (std::size_t i = 1; i < c.points.size(); ++i) EXPECT_LT(c.points[i - 1].target_date, c.points[i].target_date);
  for (const auto& p : c.points) EXPECT_NEAR(p.phi, 0.75 * p.value, 1e-15);
  EXPECT_GT(c.smooth.back().y, c.smooth.front().y);
  as.resize(4);
  EXPECT_THROW(mc::dependence_curve(as, "X"), mc::DataError);
}

TEST(Csv, Headers) {
  const std::vector<mc::Attribution> as = {attr("M", {2000, 1}, {"a_lag0"}, {0.5})};
  const auto s = mc::attributions_to_csv(as);
  EXPECT_EQ(s.substr(0, s.find('\n')), "model_id,target_date,variable,phi");
  EXPECT_NE(s.find("M,2000Q1,a_lag0,"), std::string::npos);
}

TEST(Forecast, AttributionsReproduceBacktestPredictions) {
  const auto panel = testgen::synthetic_panel(20, 6, 60);
  mc::BacktestPlan plan;
  plan.segments = {{{1992, 1}, {1998, 1}, {1999, 4}}};
  plan.seed = 4;
  mc::FeatureSpec fs;
  fs.p_y = 2;
  mc::RosterDefaults d;
  d.forest_trees = 8;
  for (const char* n : {"RF-SE", "FM-LASSO", "FM-AR-SE"}) plan.models.push_back(mc::roster_entry(n, fs, d));
  const auto res = mc::run_backtest(panel, plan);
  mc::ExplainOptions opt;
  opt.background_rows = 16;
  opt.n_permutations = 64;
  for (const auto& entry : plan.models) {
    const QuarterDate q{1999, 2};
    const auto a = mc::explain_forecast(panel, plan, entry, q, opt);
    double pred = NAN;
    for (const auto& r : res.records)
      if (r.model_id == entry.id && r.target_date == q) pred = r.prediction;
    EXPECT_NEAR(a.prediction, pred, 1e-9) << entry.id;
    EXPECT_NEAR(a.reconstructed(), a.prediction, a.exact ? 1e-9 : 1e-6) << entry.id;
    // factor models are attributed to raw indicator lags, not to factors
    for (const auto& name : a.features) EXPECT_NE(name.rfind("F1_", 0), 0u) << entry.id;
    EXPECT_EQ(a.features.front(), "y_lag1");
    const auto again = mc::explain_forecast(panel, plan, entry, q, opt);
    EXPECT_EQ(a.phi, again.phi);
  }
}
