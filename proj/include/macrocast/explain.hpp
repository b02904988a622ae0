#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "macrocast/eval.hpp"
#include "macrocast/pipeline.hpp"

namespace macrocast {

// Predictions for a batch of rows.
using BatchPredictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
BatchPredictor predictor_of(const TrainedModel& model);

struct Attribution {
  std::string model_id;
  QuarterDate target_date;
  std::vector<std::string> features;
  std::vector<double> feature_values;  // the explained instance
  double base_value = 0.0;             // mean prediction over the background
  double prediction = 0.0;
  std::vector<double> phi;
  std::vector<double> se;  // Monte-Carlo standard errors; zeros in exact mode
  double adjustment = 0.0;  // |residual| spread over phi to restore efficiency
  bool exact = true;

  double reconstructed() const;
};

inline constexpr int kMaxExactFeatures = 14;

// Interventional Shapley values by enumerating all 2^d coalitions:
// v(S) = mean over background rows b of f(x_S, b_rest).
Attribution shapley_exact(const BatchPredictor& f, std::span<const double> instance, const Eigen::MatrixXd& background,
                          std::vector<std::string> names = {});

// Antithetic permutation sampling. Each pair of permutations (pi, reverse pi)
// is paired with one background row in round-robin order; the pair count is
// rounded up so every background row is used equally often. Deterministic in
// `seed`.
Attribution shapley_sampled(const BatchPredictor& f, std::span<const double> instance, const Eigen::MatrixXd& background,
                            int n_permutations, std::uint64_t seed, std::vector<std::string> names = {});

// Exact when d <= kMaxExactFeatures, otherwise sampled.
Attribution shapley_auto(const BatchPredictor& f, std::span<const double> instance, const Eigen::MatrixXd& background,
                         std::uint64_t seed, std::vector<std::string> names = {}, int n_permutations = 4096);

// Up to `max_rows` rows drawn without replacement, kept in original order.
Eigen::MatrixXd select_background(const Eigen::MatrixXd& rows, int max_rows, std::uint64_t seed);

// Parent variable of a lag feature: "Imports_lag1" -> "Imports". Names
// without a lag suffix map to themselves.
std::string parent_variable(const std::string& feature);

struct ImportanceRow {
  std::string model_id;
  std::string variable;
  std::string period;
  double value = 0.0;  // mean |sum of the variable's lag attributions|
  int rank = 0;        // 1 = most important within (model, period)
  bool top = false;
  int n_instances = 0;
};

// Lags are summed per instance into their parent variable (signed), then
// |.| is averaged over the slice. The `top_k` largest per (model, period)
// are flagged. When `variables` is nonempty every grouped variable must be
// listed there. `rename` maps parent names (e.g. "y") to display names.
std::vector<ImportanceRow> aggregate_importance(const std::vector<Attribution>& attributions,
                                                const std::vector<PeriodSlice>& slices,
                                                const std::vector<std::string>& variables = {}, int top_k = 5,
                                                const std::map<std::string, std::string>& rename = {});

struct DependencePoint {
  std::string model_id;
  QuarterDate target_date;
  double value = 0.0;  // input value of the variable's most recent lag
  double phi = 0.0;    // summed over the variable's lags
};
struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};
struct DependenceCurve {
  std::string variable;
  std::vector<DependencePoint> points;  // sorted by target date
  std::vector<CurvePoint> smooth;       // local linear fit on an even grid
  double bandwidth = 0.0;
};

// Silverman's rule: 0.9 min(sd, IQR / 1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> x);
// Gaussian-kernel local linear regression evaluated at `at`.
std::vector<CurvePoint> local_linear(std::span<const double> x, std::span<const double> y, std::span<const double> at,
                                     double bandwidth);

DependenceCurve dependence_curve(const std::vector<Attribution>& attributions, const std::string& variable,
                                 int grid_points = 50);

std::string attributions_to_csv(const std::vector<Attribution>& attributions);
std::string importance_to_csv(const std::vector<ImportanceRow>& rows);
std::string dependence_to_csv(const DependenceCurve& curve);

struct ExplainOptions {
  int background_rows = 128;
  int n_permutations = 4096;
  int max_exact_features = kMaxExactFeatures;
  // Factor-augmented models are attributed to the raw indicators the
  // factors are built from, rather than to the factors themselves.
  bool through_factors = true;
};

// Refits `entry` for `target` as the backtest did and attributes its forecast.
Attribution explain_forecast(const Panel& panel, const BacktestPlan& plan, const ModelEntry& entry, QuarterDate target,
                             const ExplainOptions& options = {});

}  // namespace macrocast
