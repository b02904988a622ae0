#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "macrocast/app.hpp"
#include "macrocast/error.hpp"

namespace mc = macrocast;

namespace {

mc::QuarterDate quarter_arg(const std::string& flag, const std::string& s) {
  try {
    return mc::QuarterDate::parse(s);
  } catch (const mc::DataError& e) {
    throw mc::ConfigError(flag + ": " + e.what());
  }
}

std::optional<mc::QuarterDate> quarter_opt(const std::string& flag, const std::string& s) {
  if (s.empty()) return std::nullopt;
  return quarter_arg(flag, s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"macrocast: quarterly nowcasting backtests with factor models, ML learners and Shapley attribution"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "macrocast 0.1.0");

  std::string csv, out, target, start, end, impute = "ar_fill";
  auto* ingest = app.add_subcommand("ingest", "Convert a long-format CSV into a quarterly YoY panel");
  ingest->add_option("csv", csv, "Input CSV (date,variable,value,frequency,kind)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out,-o", out, "Output directory for panel.csv and transform_log.jsonl")->required();
  ingest->add_option("--target", target, "Target series id")->required();
  ingest->add_option("--start", start, "First panel quarter, e.g. 1992Q1 (default: first target quarter)");
  ingest->add_option("--end", end, "Last panel quarter (default: last target quarter)");
  ingest->add_option("--impute", impute, "Interior gap fill: ar_fill or forward_fill")->check(CLI::IsMember({"ar_fill", "forward_fill"}));

  std::string config, run;
  int workers = 1;
  auto* backtest = app.add_subcommand("backtest", "Run the expanding-window backtest and persist a run directory");
  backtest->add_option("config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  backtest->add_option("--run,-o", run, "Run directory to create")->required();
  backtest->add_option("--workers,-j", workers, "Worker threads; output does not depend on it")->check(CLI::PositiveNumber);

  std::vector<std::string> periods;
  auto* evaluate = app.add_subcommand("evaluate", "Write metrics.csv and tests.csv for a run");
  evaluate->add_option("run", run, "Run directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--period", periods, "Evaluation slice (e.g. 2010-2019, 2005Q3-2015Q4, presets); repeatable");

  std::string external, external_id = "EXTERNAL";
  auto* compare = app.add_subcommand("compare", "Compare a run against an external forecast series");
  compare->add_option("run", run, "Run directory")->required()->check(CLI::ExistingDirectory);
  compare->add_option("external", external, "CSV with target_date,forecast")->required()->check(CLI::ExistingFile);
  compare->add_option("--id", external_id, "Model id for the external series in comparison.csv");
  compare->add_option("--period", periods, "Evaluation slice; repeatable");

  std::vector<std::string> models;
  auto* explain = app.add_subcommand("explain", "Shapley attributions for forecasts of a run");
  explain->add_option("run", run, "Run directory")->required()->check(CLI::ExistingDirectory);
  explain->add_option("--model,-m", models, "Model id to explain; repeatable (default: explain.models)");
  explain->add_option("--period", periods, "Target-quarter slice; repeatable (default: explain.periods)");
  explain->add_option("--workers,-j", workers, "Worker threads; output does not depend on it")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Render report.md from a run");
  report->add_option("run", run, "Run directory")->required()->check(CLI::ExistingDirectory);

  mc::SynthSpec spec;
  std::string truth, synth_start = "1992Q1";
  auto* synth = app.add_subcommand("synth", "Generate a factor-driven synthetic panel");
  synth->add_option("--out,-o", out, "Output CSV")->required();
  synth->add_option("--truth", truth, "Ground-truth JSON sidecar");
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--vars", spec.n_vars, "Number of indicators");
  synth->add_option("--quarters", spec.quarters, "Number of quarters");
  synth->add_option("--rank", spec.rank, "Number of latent factors");
  synth->add_option("--noise", spec.noise, "Target noise standard deviation");
  synth->add_option("--idio", spec.idio, "Idiosyncratic indicator noise standard deviation");
  synth->add_option("--monthly-share", spec.monthly_share, "Share of indicators emitted monthly");
  synth->add_option("--start", synth_start, "First quarter");
  synth->add_option("--target", spec.target_id, "Target series id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*ingest) {
      mc::IngestOptions o;
      o.target = target;
      o.start = quarter_opt("--start", start);
      o.end = quarter_opt("--end", end);
      o.impute = mc::parse_impute_method(impute);
      mc::cmd_ingest(csv, out, o);
    } else if (*backtest) {
      const auto s = mc::cmd_backtest(config, run, workers);
      std::cerr << "wrote " << s.records << " forecasts for " << s.models << " models to " << run;
      if (s.warnings) std::cerr << " (" << s.warnings << " warnings, see transform_log.jsonl)";
      std::cerr << '\n';
    } else if (*evaluate) {
      mc::cmd_evaluate(run, periods);
    } else if (*compare) {
      mc::cmd_compare(run, external, periods, external_id);
    } else if (*explain) {
      mc::cmd_explain(run, models, periods, workers);
    } else if (*report) {
      mc::cmd_report(run);
    } else if (*synth) {
      spec.start = quarter_arg("--start", synth_start);
      spec.validate();
      mc::cmd_synth(spec, out, truth);
    }
  } catch (const mc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
