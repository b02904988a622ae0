#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <variant>
#include <vector>

#include "macrocast/data.hpp"

namespace macrocast {

// Number of principal components to keep.
struct FixedRank {
  int rank = 1;
};
// Smallest rank whose cumulative explained variance reaches `threshold`,
// capped at `max_rank`.
struct VarianceThreshold {
  double threshold = 0.80;
  int max_rank = 8;
};
using RankRule = std::variant<FixedRank, VarianceThreshold>;

// Principal-component factor model X = Lambda F + eta on standardized columns.
// Only the training window contributes to means, standard deviations and
// loadings.
struct FactorFit {
  std::vector<std::string> variables;
  Eigen::MatrixXd loadings;  // n_vars x rank; unit-norm columns
  Eigen::MatrixXd factors;   // T x rank; scores of the training rows
  Eigen::VectorXd col_means;
  Eigen::VectorXd col_stds;  // sample std (n - 1)
  Eigen::VectorXd explained_variance_ratio;
  int rank = 0;

  // Scores for rows laid out in `variables` order.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const;
  // Scores for rows whose columns are named by `names`; columns are matched by
  // name and extra columns are ignored. Missing variables throw DataError.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows, const std::vector<std::string>& names) const;

  nlohmann::ordered_json to_json() const;
  static FactorFit from_json(const nlohmann::json& j);
};

FactorFit fit_factors(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const RankRule& rule);
// Uses the panel's indicator columns (everything but the target).
FactorFit fit_factors(const Panel& window, const RankRule& rule);

}  // namespace macrocast
