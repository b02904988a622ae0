#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "macrocast/ensemble.hpp"
#include "macrocast/eval.hpp"
#include "macrocast/explain.hpp"
#include "macrocast/pipeline.hpp"
#include "macrocast/roster.hpp"

namespace macrocast {

struct DataConfig {
  std::filesystem::path path;
  std::string target;
  std::optional<QuarterDate> start;  // defaults to the target's first quarter
  std::optional<QuarterDate> end;    // defaults to the target's last quarter
  ImputeMethod impute = ImputeMethod::ArFill;
};

struct EvaluationConfig {
  std::vector<PeriodSlice> periods;  // "all" is always appended
  std::string baseline = "AR";
  bool robust_se = false;
  std::vector<std::pair<std::string, std::string>> inclusive;  // (subject, rival); empty: every model vs baseline
  bool inclusive_intercept = false;
};

struct ExplainConfig {
  std::vector<std::string> models;
  std::vector<PeriodSlice> periods;
  ExplainOptions options;
  int top_k = 5;
  std::vector<std::string> dependence;  // variables to emit dependence curves for
};

struct RunConfig {
  DataConfig data;
  std::uint64_t seed = 0;
  BacktestPlan plan;
  std::vector<EnsembleSpec> ensembles;
  EvaluationConfig evaluation;
  ExplainConfig explain;
  nlohmann::ordered_json resolved;  // input with the data path made absolute and the seed applied
};

// Strict parse: unknown keys and wrong types throw ConfigError naming the
// offending field (e.g. "backtest.refit_every"). Relative paths resolve
// against `base_dir`.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
// Reads and parses a config file. MACROCAST_SEED, when set, overrides "seed".
RunConfig load_config(const std::filesystem::path& path);
std::string config_hash(const RunConfig& cfg);

}  // namespace macrocast
