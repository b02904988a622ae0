#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "macrocast/pipeline.hpp"

namespace macrocast {

// Inclusive range of target quarters.
struct PeriodSlice {
  std::string label;
  QuarterDate start;
  QuarterDate end;

  bool contains(QuarterDate q) const { return !(q < start) && !(end < q); }
  // "1996-1999", "2005Q3-2015Q4", "2023", "2010Q2". Throws ConfigError.
  static PeriodSlice parse(const std::string& text);
  // 1996-1999, 1997-1998, 2000-2003, 2004-2009, 2005Q3-2015Q4, 2008-2010,
  // 2014-2019, 2020-2022, 2023.
  static std::vector<PeriodSlice> presets();
  // Slice spanning every record's target date, labelled "all".
  static PeriodSlice all(const std::vector<ForecastRecord>& records);
};

struct MetricRow {
  std::string model_id;
  std::string period;
  std::optional<double> rmse;  // empty when n_obs == 0
  std::optional<double> mae;
  int n_obs = 0;
};

// One row per (model, slice): models in sorted order, slices in given order.
// Throws DataError when a record inside a slice has no actual.
std::vector<MetricRow> compute_metrics(const std::vector<ForecastRecord>& records,
                                       const std::vector<PeriodSlice>& slices);
std::string metrics_to_csv(const std::vector<MetricRow>& rows);

struct RegressionResult {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::VectorXd t;
  Eigen::VectorXd p;  // two-sided, Student t with df degrees of freedom
  int n = 0;
  int df = 0;
  double r2 = 0.0;  // uncentered when there is no intercept
  double sigma2 = 0.0;
};

// Least squares. With `intercept`, a leading column of ones named
// "intercept" is added. `robust` switches to HC1 standard errors.
RegressionResult ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, bool intercept, bool robust = false,
                     std::vector<std::string> names = {});

// e_i = (1 - lambda)(e_i - e_j) + eps. The coefficient on "diff" estimates
// (1 - lambda); with `intercept` a constant is added as well.
RegressionResult inclusive_test(const Eigen::VectorXd& e_i, const Eigen::VectorXd& e_j, bool intercept = false);

struct PanelCell {
  std::string model_id;
  QuarterDate target_date;
  int horizon = 1;
  double value = 0.0;
};

enum class ErrorMetric { Squared, Absolute };
// SE or AE of every record with an actual.
std::vector<PanelCell> error_cells(const std::vector<ForecastRecord>& records, ErrorMetric metric);

struct FixedEffectsResult {
  std::string baseline;
  RegressionResult fit;  // one coefficient per non-baseline model, named by model id
};

// value_{m,t,h} = alpha_m + gamma_{t,h} + eps with alpha_baseline = 0,
// estimated by the within transformation over (t, h) groups.
FixedEffectsResult panel_fe_regression(const std::vector<PanelCell>& cells, const std::string& baseline = "AR",
                                       bool robust = false);

struct ExternalForecast {
  QuarterDate target_date;
  double forecast = 0.0;
};
// CSV with columns target_date,forecast; empty forecast cells are gaps.
std::vector<ExternalForecast> read_external_csv(const std::filesystem::path& path);

// Metrics for the external series (as `external_id`) and every model, over
// the quarters that the external series and all models share.
std::vector<MetricRow> compare_external(const std::vector<ForecastRecord>& records,
                                        const std::vector<ExternalForecast>& external,
                                        const std::vector<PeriodSlice>& slices,
                                        const std::string& external_id = "EXTERNAL");

// tests.csv: test,subject,rival,term,estimate,se,t,p,n,df
struct TestRow {
  std::string test;
  std::string subject;
  std::string rival;
  std::string term;
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 0.0;
  int n = 0;
  int df = 0;
};
std::vector<TestRow> regression_rows(const std::string& test, const std::string& subject, const std::string& rival,
                                     const RegressionResult& r);
std::string tests_to_csv(const std::vector<TestRow>& rows);

// Aligned errors (actual - prediction) of two models over shared quarters.
std::pair<Eigen::VectorXd, Eigen::VectorXd> aligned_errors(const std::vector<ForecastRecord>& records,
                                                           const std::string& model_i, const std::string& model_j);

}  // namespace macrocast
