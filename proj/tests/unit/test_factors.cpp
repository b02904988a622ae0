#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "macrocast/error.hpp"
#include "macrocast/factors.hpp"
#include "macrocast/synth.hpp"
#include "support/testgen.hpp"

namespace mc = macrocast;

namespace {

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

// Standardization with the sample (n - 1) standard deviation, written out longhand.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double m = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) m += x(i, j);
    m /= static_cast<double>(x.rows());
    double ss = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) ss += (x(i, j) - m) * (x(i, j) - m);
    const double sd = std::sqrt(ss / static_cast<double>(x.rows() - 1));
    for (Eigen::Index i = 0; i < x.rows(); ++i) z(i, j) = (x(i, j) - m) / sd;
  }
  return z;
}

}  // namespace

TEST(Factors, ExactRankOnePanel) {
  testgen::Gen g(1);
  const Eigen::VectorXd f = g.vector(60);
  Eigen::VectorXd lambda = g.vector(12);
  for (auto& l : lambda) l += l >= 0 ? 0.5 : -0.5;
  const Eigen::MatrixXd x = f * lambda.transpose();
  const auto fit = mc::fit_factors(x, testgen::names(12), mc::FixedRank{1});
  EXPECT_GE(fit.explained_variance_ratio(0), 0.999);
  EXPECT_GE(std::abs(corr(fit.factors.col(0), f)), 0.999);
}

TEST(Factors, DuplicatedColumnsGiveOneFactor) {
  testgen::Gen g(2);
  Eigen::MatrixXd x(30, 2);
  x.col(0) = g.vector(30);
  x.col(1) = x.col(0);
  const auto fit = mc::fit_factors(x, {"a", "b"}, mc::VarianceThreshold{0.8, 8});
  EXPECT_EQ(fit.rank, 1);
  EXPECT_NEAR(fit.explained_variance_ratio(0), 1.0, 1e-12);
}

TEST(Factors, FullRankReconstructionIsLossless) {
  testgen::Gen g(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd x = g.matrix(40, 10);
    const auto fit = mc::fit_factors(x, testgen::names(10), mc::FixedRank{10});
    const Eigen::MatrixXd z = standardize(x);
    EXPECT_LE((z - fit.factors * fit.loadings.transpose()).norm(), 1e-8);
  }
}

TEST(Factors, VarianceRatiosMatchSingularValues) {
  testgen::Gen g(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(3, 12);
    Eigen::MatrixXd x = g.matrix(50, n);
    x.col(1) += 2.0 * x.col(0);
    const auto fit = mc::fit_factors(x, testgen::names(n), mc::FixedRank{n});
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(standardize(x)).singularValues();
    const Eigen::VectorXd ratio = s.array().square() / s.squaredNorm();
    for (int k = 0; k < n; ++k) EXPECT_NEAR(fit.explained_variance_ratio(k), ratio(k), 1e-9);
  }
}

TEST(Factors, ThresholdPicksSmallestSufficientRank) {
  testgen::Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(4, 10);
    const Eigen::MatrixXd x = g.matrix(40, 2) * g.matrix(2, n) + 0.3 * g.matrix(40, n);
    const double th = g.uniform(0.3, 0.99);
    const auto full = mc::fit_factors(x, testgen::names(n), mc::FixedRank{n});
    int expected = n;
    double cum = 0;
    for (int k = 0; k < n; ++k) {
      cum += full.explained_variance_ratio(k);
      if (cum >= th) {
        expected = k + 1;
        break;
      }
    }
    const auto fit = mc::fit_factors(x, testgen::names(n), mc::VarianceThreshold{th, 8});
    EXPECT_EQ(fit.rank, std::min(expected, 8));
    const auto capped = mc::fit_factors(x, testgen::names(n), mc::VarianceThreshold{0.9999, 2});
    EXPECT_EQ(capped.rank, 2);
  }
}

TEST(Factors, TransformOfTrainingRowsIsStoredFactors) {
  testgen::Gen g(6);
  const Eigen::MatrixXd x = g.matrix(35, 6);
  const auto fit = mc::fit_factors(x, testgen::names(6), mc::FixedRank{3});
  EXPECT_LE((fit.transform(x) - fit.factors).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::MatrixXd means = fit.col_means.transpose();
  EXPECT_LE(fit.transform(means).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Factors, TransformIsLinearAroundTheMean) {
  testgen::Gen g(7);
  const Eigen::VectorXd f = g.vector(50);
  const Eigen::VectorXd lambda = g.vector(8);
  const Eigen::MatrixXd x = f * lambda.transpose() + 0.01 * g.matrix(50, 8);
  const auto fit = mc::fit_factors(x, testgen::names(8), mc::FixedRank{1});
  Eigen::MatrixXd rows(2, 8);
  rows.row(0) = fit.col_means.transpose() + lambda.transpose();
  rows.row(1) = fit.col_means.transpose() + 2.0 * lambda.transpose();
  const Eigen::MatrixXd s = fit.transform(rows);
  EXPECT_NEAR(s(1, 0), 2.0 * s(0, 0), 1e-10 * std::abs(s(1, 0)));
  const Eigen::VectorXd zrow = (lambda.array() / fit.col_stds.array()).matrix();
  EXPECT_NEAR(s(0, 0), zrow.dot(fit.loadings.col(0)), 1e-10);
}

TEST(Factors, ReorderingVariablesOnlyFlipsSigns) {
  testgen::Gen g(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd x = g.matrix(40, 3) * g.matrix(3, 9) + 0.5 * g.matrix(40, 9);
    std::vector<int> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + g.integer(0, 8), perm.end());
    Eigen::MatrixXd xp(40, 9);
    std::vector<std::string> np;
    const auto names = testgen::names(9);
    for (int j = 0; j < 9; ++j) {
      xp.col(j) = x.col(perm[static_cast<std::size_t>(j)]);
      np.push_back(names[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])]);
    }
    const auto a = mc::fit_factors(x, names, mc::FixedRank{3});
    const auto b = mc::fit_factors(xp, np, mc::FixedRank{3});
    for (int k = 0; k < 3; ++k) {
      const double sign = a.factors.col(k).dot(b.factors.col(k)) >= 0 ? 1.0 : -1.0;
      EXPECT_LE((a.factors.col(k) - sign * b.factors.col(k)).cwiseAbs().maxCoeff(), 1e-8);
    }
    // Transform by name is independent of column layout.
    EXPECT_LE((a.transform(xp, np) - a.factors).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Factors, PostWindowRowsDoNotLeak) {
  mc::SynthSpec spec;
  spec.seed = 3;
  const auto syn = mc::generate_synthetic(spec);
  mc::Panel panel;
  panel.index = syn.index;
  panel.columns = syn.names;
  panel.columns.insert(panel.columns.begin(), spec.target_id);
  panel.target_id = spec.target_id;
  panel.values.resize(syn.x.rows(), syn.x.cols() + 1);
  panel.values.col(0) = syn.y;
  panel.values.rightCols(syn.x.cols()) = syn.x;
  panel.first_valid.assign(panel.columns.size(), panel.index.front());
  const auto window_end = panel.index[60];
  const auto a = mc::fit_factors(panel.slice(panel.index.front(), window_end), mc::VarianceThreshold{});
  mc::Panel altered = panel;
  altered.values.bottomRows(altered.values.rows() - 61).array() += 1000.0;
  const auto b = mc::fit_factors(altered.slice(panel.index.front(), window_end), mc::VarianceThreshold{});
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Factors, SyntheticRankTwoPanelIsRecovered) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    mc::SynthSpec spec;
    spec.seed = seed;
    spec.rank = 2;
    const auto syn = mc::generate_synthetic(spec);
    const auto fit = mc::fit_factors(syn.x, syn.names, mc::FixedRank{2});
    EXPECT_GE(fit.explained_variance_ratio.sum(), 0.95) << "seed " << seed;
    // The factor space spans the true factors.
    for (int k = 0; k < 2; ++k) {
      Eigen::MatrixXd a(fit.factors.rows(), 3);
      a << Eigen::VectorXd::Ones(fit.factors.rows()), fit.factors;
      const Eigen::VectorXd t = syn.factors.col(k);
      const Eigen::VectorXd resid = t - a * a.colPivHouseholderQr().solve(t);
      const Eigen::VectorXd tc = t.array() - t.mean();
      EXPECT_GE(1.0 - resid.squaredNorm() / tc.squaredNorm(), 0.95);
    }
  }
}

TEST(Factors, JsonRoundTripAndErrors) {
  testgen::Gen g(9);
  const Eigen::MatrixXd x = g.matrix(20, 4);
  const auto fit = mc::fit_factors(x, testgen::names(4), mc::FixedRank{2});
  const auto back = mc::FactorFit::from_json(fit.to_json());
  EXPECT_EQ(back.to_json(), fit.to_json());
  Eigen::MatrixXd c = x;
  c.col(2).setConstant(3.0);
  EXPECT_THROW(mc::fit_factors(c, testgen::names(4), mc::FixedRank{1}), mc::DataError);
  EXPECT_THROW(mc::fit_factors(x, testgen::names(4), mc::FixedRank{5}), mc::ConfigError);
  c = x;
  c(3, 1) = mc::kMissing;
  EXPECT_THROW(mc::fit_factors(c, testgen::names(4), mc::FixedRank{1}), mc::DataError);
}
