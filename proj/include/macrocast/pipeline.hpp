#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "macrocast/data.hpp"
#include "macrocast/factors.hpp"
#include "macrocast/learners/model.hpp"
#include "macrocast/quarter.hpp"

namespace macrocast {

enum class FeatureMode { RawIndicators, FactorAugmented, TargetOnly };
std::string_view to_string(FeatureMode m);
FeatureMode parse_feature_mode(std::string_view s);

// Lag layout of a design row at origin t:
//   y_lag{j}     = y_{t-j+1},  j = 1..p_y   (y_lag1 is the origin value)
//   {var}_lag{j} = x_{t-j},    j = 0..p_x   (raw_indicators)
//   F{k}_lag{j}  = F_{k,t-j},  j = 0..p_f   (factor_augmented)
// and the target is y_{t+h}.
struct FeatureSpec {
  int p_y = 4;
  int p_x = 1;
  int p_f = 1;
  int horizon = 1;
  FeatureMode mode = FeatureMode::RawIndicators;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static FeatureSpec from_json(const nlohmann::json& j);
};

// Every origin of the panel with its feature row and target. Cells that are
// unavailable (before the panel start, missing, or past its end) are NaN.
struct LaggedDesign {
  std::vector<QuarterDate> origins;
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;
  std::vector<std::string> names;

  bool row_complete(Eigen::Index i) const;
  bool usable(Eigen::Index i) const { return row_complete(i) && std::isfinite(targets(i)); }
};

// `indicators` restricts raw mode to the given columns (all indicators when
// empty). Factor mode needs `factors`; its variables must be panel columns.
LaggedDesign build_design(const Panel& panel, const FeatureSpec& spec, const FactorFit* factors = nullptr,
                          const std::vector<std::string>& indicators = {});

// Usable rows only. Throws DataError naming the binding constraint when none remain.
Dataset build_features(const Panel& panel, const FeatureSpec& spec, const FactorFit* factors = nullptr);

struct Segment {
  QuarterDate train_start;
  QuarterDate forecast_start;
  QuarterDate forecast_end;
};

// One backtested model. A grid with more than one spec is cross-validated
// on every training window; otherwise grid[0] is fitted directly.
struct ModelEntry {
  std::string id;
  std::vector<ModelSpec> grid;
  FeatureSpec features;
  RankRule rank = VarianceThreshold{};
};

struct BacktestPlan {
  std::vector<Segment> segments;
  std::vector<ModelEntry> models;
  int refit_every = 1;
  int min_train_rows = 12;
  int cv_folds = 5;
  bool continuous_expanding = false;  // every segment trains from the first segment's start
  std::uint64_t seed = 0;

  // Periods a-d: 1992/1996-1999, 1996/2000-2003, 2000/2004-2009, 2005/2010-2023.
  static std::vector<Segment> four_period_segments();
  int forecast_quarters() const;
  void validate() const;
  void validate(const Panel& panel) const;
};

struct ForecastRecord {
  std::string model_id;
  QuarterDate origin;
  QuarterDate target_date;
  int horizon = 1;
  double prediction = 0.0;
  std::optional<double> actual;

  friend bool operator==(const ForecastRecord&, const ForecastRecord&) = default;
};

// Deterministic output order: model_id, then target date, then horizon.
void sort_records(std::vector<ForecastRecord>& records);

struct FitInfo {
  std::string model_id;
  QuarterDate target_date;
  QuarterDate train_end;  // last origin whose target entered training
  int n_train = 0;
  int n_features = 0;
  int factor_rank = 0;
  std::string spec_label;
  std::string model_hash;
};

struct BacktestResult {
  std::vector<ForecastRecord> records;
  std::vector<FitInfo> fits;
  TransformLog log;
  std::map<std::string, std::string> model_hashes;  // per model id, over all of its fits
};

// Expanding-window backtest. Each (model, refit block) is one task; the
// result does not depend on `workers` or on model order.
BacktestResult run_backtest(const Panel& panel, const BacktestPlan& plan, int workers = 1);

// One fitted model at a given forecast origin, as used by the backtest.
struct OriginFit {
  TrainedModel model;
  Eigen::RowVectorXd instance;  // feature row at the origin
  Eigen::MatrixXd train_x;      // training design
  std::optional<FactorFit> factors;
  std::vector<std::string> indicators;
  std::string spec_label;
  QuarterDate window_start;  // first quarter of the training window
  QuarterDate origin;
};
// Refits `entry` exactly as the backtest does for target quarter `target`,
// using data up to target - horizon only.
OriginFit fit_at_origin(const Panel& panel, const BacktestPlan& plan, const ModelEntry& entry, QuarterDate target);

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> model_hashes;
  std::string created_at;
  std::map<std::string, std::string> files;  // file name -> sha256

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::string records_to_csv(const std::vector<ForecastRecord>& records);
std::vector<ForecastRecord> records_from_csv(const std::string& text, std::string_view source);

struct RunFiles {
  std::vector<ForecastRecord> records;
  std::string transform_log;  // JSON lines
  std::string config;         // JSON, may be empty
  std::vector<FitInfo> fits;
  std::map<std::string, std::string> extra;  // further files (name -> content) covered by the manifest
};

// Writes forecasts.csv, fits.csv, transform_log.jsonl, config.json and
// manifest.json into a temporary sibling directory, then renames it over `dir`.
void persist_run(const std::filesystem::path& dir, const RunFiles& files, RunManifest manifest);

struct LoadedRun {
  RunManifest manifest;
  std::vector<ForecastRecord> records;
  std::string config;
};
// Verifies every file hash in the manifest; a mismatch throws IntegrityError.
LoadedRun load_run(const std::filesystem::path& dir);

std::string utc_timestamp();

}  // namespace macrocast
