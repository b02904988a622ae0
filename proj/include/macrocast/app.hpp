#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "macrocast/config.hpp"
#include "macrocast/synth.hpp"

namespace macrocast {

// Batch commands behind the CLI. Each reads and writes only the documented
// files and throws ConfigError (validation) or another Error (runtime).

struct IngestOptions {
  std::string target;
  std::optional<QuarterDate> start;
  std::optional<QuarterDate> end;
  ImputeMethod impute = ImputeMethod::ArFill;
};
// Writes panel.csv (wide, quarterly) and transform_log.jsonl into `out_dir`.
void cmd_ingest(const std::filesystem::path& csv, const std::filesystem::path& out_dir, const IngestOptions& options);

// Loads the data file named by the config and prepares the quarterly panel.
Panel load_panel(const RunConfig& cfg, TransformLog* log = nullptr);

struct BacktestSummary {
  std::size_t records = 0;
  std::size_t models = 0;
  std::size_t warnings = 0;
};
BacktestSummary cmd_backtest(const std::filesystem::path& config, const std::filesystem::path& run_dir, int workers = 1);
BacktestSummary run_and_persist(const RunConfig& cfg, const std::filesystem::path& run_dir, int workers = 1);

// metrics.csv and tests.csv. `periods` overrides the configured slices.
void cmd_evaluate(const std::filesystem::path& run_dir, const std::vector<std::string>& periods = {});

// comparison.csv: metrics over quarters shared by every model and the external series.
void cmd_compare(const std::filesystem::path& run_dir, const std::filesystem::path& external_csv,
                 const std::vector<std::string>& periods = {}, const std::string& external_id = "EXTERNAL");

// shapley.csv, importance.csv, dependence_{var}.csv and explain_meta.json.
// Empty `models` / `periods` fall back to the configured explain settings.
void cmd_explain(const std::filesystem::path& run_dir, const std::vector<std::string>& models = {},
                 const std::vector<std::string>& periods = {}, int workers = 1);

// report.md rendered from the persisted run (and importance.csv when present).
std::string render_report(const std::filesystem::path& run_dir);
void cmd_report(const std::filesystem::path& run_dir);

// Writes the panel CSV and, when `truth_json` is nonempty, the ground-truth sidecar.
void cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_csv, const std::filesystem::path& truth_json = {});

}  // namespace macrocast
