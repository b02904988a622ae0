#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "macrocast/quarter.hpp"

namespace macrocast {

// Factor-driven panel:
//   F_{k,t} = rho_k F_{k,t-1} + u_{k,t}                     (u ~ N(0, 1))
//   x_{i,t} = mu_i + lambda_i' F_t + idio * e_{i,t}
//   y_t     = c + a y_{t-1} + b' F_{t-1} + noise * v_t
// A share of the indicators is emitted monthly; the three months of a
// quarter average exactly to the quarterly value.
struct SynthSpec {
  int n_vars = 20;
  int quarters = 128;
  int rank = 2;
  double noise = 0.5;
  double idio = 0.2;
  double monthly_share = 0.25;
  QuarterDate start{1992, 1};
  std::string target_id = "GDP";
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SynthPanel {
  SynthSpec spec;
  std::vector<QuarterDate> index;
  std::vector<std::string> names;  // indicators
  std::vector<bool> monthly;       // per indicator
  Eigen::MatrixXd factors;         // quarters x rank
  Eigen::MatrixXd loadings;        // n_vars x rank
  Eigen::VectorXd means;           // mu
  Eigen::VectorXd factor_ar;       // rho
  double intercept = 0.0;          // c
  double target_ar = 0.0;          // a
  Eigen::VectorXd target_loadings; // b
  Eigen::MatrixXd x;               // quarters x n_vars, quarterly values
  Eigen::VectorXd y;
  Eigen::MatrixXd monthly_x;       // (3 * quarters) x n_vars; only monthly columns are meaningful

  // Long CSV in the ingestion schema (date,variable,value,frequency,kind).
  std::string to_csv() const;
  nlohmann::ordered_json truth() const;
};

SynthPanel generate_synthetic(const SynthSpec& spec);

}  // namespace macrocast
