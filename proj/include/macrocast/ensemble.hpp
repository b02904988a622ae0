#pragma once

#include <span>
#include <string>
#include <vector>

#include "macrocast/pipeline.hpp"

namespace macrocast {

struct EnsembleSpec {
  enum class Kind { Mean, Median, Reciprocal, Exponential };

  std::string id;
  std::vector<std::string> members;
  Kind kind = Kind::Mean;
  int window = 4;     // m: previous quarters of realized loss
  double beta = 1.0;  // exponential weighting only
  LossKind loss = LossKind::absolute();

  void validate() const;
};

// Table-style names: "Median ML Models" / "Mean ML Models" (G2),
// "... CC Models" (G3), "... All Models" (G2 and G3), "RECIP{m}" and
// "EXP{beta}_{m}". Weighted names default to G2 and G3 members. Returns
// nullopt for names that are not ensemble names.
std::optional<EnsembleSpec> parse_ensemble_name(const std::string& name);

double combine_values(std::vector<double> values, EnsembleSpec::Kind kind);

// Per-quarter mean or median over the members.
std::vector<ForecastRecord> combine_static(const std::vector<ForecastRecord>& records, const EnsembleSpec& spec);

// w_j proportional to 1 / max(L_j, eps).
std::vector<double> weights_reciprocal(std::span<const double> loss_sums, double eps = 1e-9);
// w_j proportional to exp(-beta (L_j - min L)).
std::vector<double> weights_exponential(std::span<const double> loss_sums, double beta);

struct WeightRow {
  QuarterDate target_date;
  int history = 0;  // quarters of realized loss used
  std::vector<double> weights;
};

struct WeightedResult {
  std::vector<ForecastRecord> records;
  std::vector<WeightRow> weights;
  TransformLog log;
};

// Weights for target q come from the latest `window` quarters s <= q - h
// whose actuals are known; fewer are used when fewer exist, and uniform
// weights when none do.
WeightedResult weighted_forecast(const std::vector<ForecastRecord>& records, const EnsembleSpec& spec);

// Dispatches on spec.kind.
WeightedResult run_ensemble(const std::vector<ForecastRecord>& records, const EnsembleSpec& spec);

}  // namespace macrocast
