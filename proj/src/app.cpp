#include "macrocast/app.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"

namespace macrocast {

namespace fs = std::filesystem;

namespace {

std::pair<QuarterDate, QuarterDate> target_span(const std::vector<RawSeries>& series, const std::string& target) {
  for (const auto& s : series) {
    if (s.id != target) continue;
    if (s.frequency != Frequency::Quarterly) throw DataError("target '" + target + "' must be a quarterly series");
    const RawSeries t = s.kind == SeriesKind::Level ? to_yoy(s) : s;
    std::optional<int> lo, hi;
    for (const auto& o : t.observations) {
      if (is_missing(o.value)) continue;
      if (!lo) lo = o.period;
      hi = o.period;
    }
    if (!lo) throw DataError("target '" + target + "' has no observed values");
    return {QuarterDate::from_ordinal(*lo), QuarterDate::from_ordinal(*hi)};
  }
  throw DataError("target '" + target + "' is not in the data file");
}

Panel prepare(const fs::path& path, const std::string& target, std::optional<QuarterDate> start,
              std::optional<QuarterDate> end, ImputeMethod impute, TransformLog* log) {
  const auto series = parse_csv(path);
  const auto span = target_span(series, target);
  return prepare_panel(series, target, start.value_or(span.first), end.value_or(span.second), impute, log);
}

RunConfig run_config(const LoadedRun& run, const fs::path& dir) {
  if (run.config.empty()) throw ConfigError("run at " + dir.string() + " has no config.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(run.config);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("config.json in the run is not valid JSON: ") + e.what());
  }
  return parse_config(j, dir);
}

std::vector<PeriodSlice> slices_from(const std::vector<std::string>& periods, const std::vector<PeriodSlice>& fallback) {
  if (periods.empty()) return fallback;
  std::vector<PeriodSlice> out;
  for (const auto& p : periods) {
    if (p == "presets") {
      for (auto& s : PeriodSlice::presets()) out.push_back(std::move(s));
    } else {
      out.push_back(PeriodSlice::parse(p));
    }
  }
  return out;
}

std::vector<ForecastRecord> realized(const std::vector<ForecastRecord>& records) {
  std::vector<ForecastRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out), [](const ForecastRecord& r) { return r.actual.has_value(); });
  return out;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string safe_file_part(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out;
}

}  // namespace

Panel load_panel(const RunConfig& cfg, TransformLog* log) {
  return prepare(cfg.data.path, cfg.data.target, cfg.data.start, cfg.data.end, cfg.data.impute, log);
}

void cmd_ingest(const fs::path& csv, const fs::path& out_dir, const IngestOptions& options) {
  if (options.target.empty()) throw ConfigError("--target is required");
  if (!fs::exists(csv)) throw ConfigError("input file " + csv.string() + " does not exist");
  TransformLog log;
  const Panel panel = prepare(csv, options.target, options.start, options.end, options.impute, &log);
  fs::create_directories(out_dir);
  io::write_file_atomic(out_dir / "panel.csv", panel_to_csv(panel));
  io::write_file_atomic(out_dir / "transform_log.jsonl", log.to_jsonl());
}

BacktestSummary run_and_persist(const RunConfig& cfg, const fs::path& run_dir, int workers) {
  TransformLog log;
  const Panel panel = load_panel(cfg, &log);
  BacktestResult result = run_backtest(panel, cfg.plan, workers);
  log.append(result.log);

  std::vector<ForecastRecord> records = result.records;
  std::string weights = "ensemble_id,target_date,history,member,weight\n";
  bool any_weights = false;
  for (const auto& spec : cfg.ensembles) {
    WeightedResult r = run_ensemble(result.records, spec);
    log.append(r.log);
    records.insert(records.end(), r.records.begin(), r.records.end());
    for (const auto& w : r.weights) {
      any_weights = true;
      for (std::size_t j = 0; j < spec.members.size(); ++j) {
        weights += io::csv_escape(spec.id) + ',' + w.target_date.to_string() + ',' + std::to_string(w.history) + ',' +
                   io::csv_escape(spec.members[j]) + ',' + io::format_real(w.weights[j]) + '\n';
      }
    }
  }
  sort_records(records);

  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.seed = cfg.seed;
  manifest.model_hashes = result.model_hashes;
  manifest.created_at = utc_timestamp();
  RunFiles files;
  files.records = records;
  files.transform_log = log.to_jsonl();
  files.config = cfg.resolved.dump(2) + "\n";
  files.fits = result.fits;
  if (any_weights) files.extra["weights.csv"] = weights;
  persist_run(run_dir, files, manifest);

  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.model_id);
  return {records.size(), ids.size(), log.warning_count()};
}

BacktestSummary cmd_backtest(const fs::path& config, const fs::path& run_dir, int workers) {
  if (workers < 1) throw ConfigError("--workers must be >= 1");
  return run_and_persist(load_config(config), run_dir, workers);
}

void cmd_evaluate(const fs::path& run_dir, const std::vector<std::string>& periods) {
  const LoadedRun run = load_run(run_dir);
  const RunConfig cfg = run_config(run, run_dir);
  const auto records = realized(run.records);
  auto slices = slices_from(periods, cfg.evaluation.periods);
  slices.push_back(PeriodSlice::all(records));
  io::write_file_atomic(run_dir / "metrics.csv", metrics_to_csv(compute_metrics(records, slices)));

  std::vector<TestRow> tests;
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.model_id);
  const std::string& base = cfg.evaluation.baseline;
  if (ids.count(base) && ids.size() >= 2) {
    for (const auto& [name, metric] : {std::pair{"panel_fe_SE", ErrorMetric::Squared}, std::pair{"panel_fe_AE", ErrorMetric::Absolute}}) {
      const auto fe = panel_fe_regression(error_cells(records, metric), base, cfg.evaluation.robust_se);
      for (auto row : regression_rows(name, "", base, fe.fit)) {
        row.subject = row.term;
        row.term = "alpha";
        tests.push_back(std::move(row));
      }
    }
  }
  auto pairs = cfg.evaluation.inclusive;
  if (pairs.empty() && ids.count(base)) {
    for (const auto& id : ids) {
      if (id != base) pairs.emplace_back(id, base);
    }
  }
  for (const auto& [subject, rival] : pairs) {
    if (!ids.count(subject) || !ids.count(rival)) continue;
    const auto [ei, ej] = aligned_errors(records, subject, rival);
    try {
      const auto res = inclusive_test(ei, ej, cfg.evaluation.inclusive_intercept);
      for (auto& row : regression_rows("inclusive", subject, rival, res)) tests.push_back(std::move(row));
    } catch (const DataError&) {
      // Degenerate or too-short comparisons carry no information.
    }
  }
  io::write_file_atomic(run_dir / "tests.csv", tests_to_csv(tests));
}

void cmd_compare(const fs::path& run_dir, const fs::path& external_csv, const std::vector<std::string>& periods,
                 const std::string& external_id) {
  if (!fs::exists(external_csv)) throw ConfigError("external file " + external_csv.string() + " does not exist");
  const LoadedRun run = load_run(run_dir);
  const RunConfig cfg = run_config(run, run_dir);
  const auto records = realized(run.records);
  auto slices = slices_from(periods, cfg.evaluation.periods);
  slices.push_back(PeriodSlice::all(records));
  const auto rows = compare_external(records, read_external_csv(external_csv), slices, external_id);
  io::write_file_atomic(run_dir / "comparison.csv", metrics_to_csv(rows));
}

void cmd_explain(const fs::path& run_dir, const std::vector<std::string>& models_in,
                 const std::vector<std::string>& periods, int workers) {
  if (workers < 1) throw ConfigError("--workers must be >= 1");
  const LoadedRun run = load_run(run_dir);
  const RunConfig cfg = run_config(run, run_dir);
  const std::vector<std::string> models = models_in.empty() ? cfg.explain.models : models_in;
  if (models.empty()) throw ConfigError("no models to explain (pass --model or set explain.models)");
  const auto slices = slices_from(periods, cfg.explain.periods);

  struct Job {
    const ModelEntry* entry;
    QuarterDate target;
  };
  std::vector<Job> jobs;
  for (const auto& m : models) {
    auto it = std::find_if(cfg.plan.models.begin(), cfg.plan.models.end(), [&](const ModelEntry& e) { return e.id == m; });
    if (it == cfg.plan.models.end()) throw ConfigError("'" + m + "' is not a single model of this run");
    for (const auto& r : run.records) {
      if (r.model_id != m) continue;
      if (!slices.empty() && std::none_of(slices.begin(), slices.end(), [&](const PeriodSlice& s) { return s.contains(r.target_date); })) {
        continue;
      }
      jobs.push_back({&*it, r.target_date});
    }
  }
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    if (a.entry->id != b.entry->id) return a.entry->id < b.entry->id;
    return a.target < b.target;
  });
  if (jobs.empty()) throw ConfigError("no forecasts of the requested models fall in the requested periods");

  const Panel panel = load_panel(cfg);
  std::vector<std::optional<Attribution>> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out[i] = explain_forecast(panel, cfg.plan, *jobs[i].entry, jobs[i].target, cfg.explain.options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp<int>(workers, 1, static_cast<int>(jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<Attribution> attrs;
  for (auto& a : out) attrs.push_back(std::move(*a));

  const std::map<std::string, std::string> rename{{"y", cfg.data.target}};
  std::vector<PeriodSlice> imp_slices = slices;
  if (imp_slices.empty()) {
    PeriodSlice all;
    all.label = "all";
    all.start = all.end = attrs.front().target_date;
    for (const auto& a : attrs) {
      all.start = std::min(all.start, a.target_date);
      all.end = std::max(all.end, a.target_date);
    }
    imp_slices.push_back(all);
  }
  io::write_file_atomic(run_dir / "shapley.csv", attributions_to_csv(attrs));
  io::write_file_atomic(run_dir / "importance.csv",
                        importance_to_csv(aggregate_importance(attrs, imp_slices, {}, cfg.explain.top_k, rename)));

  auto skipped = nlohmann::ordered_json::array();
  for (const auto& var : cfg.explain.dependence) {
    const std::string internal = var == cfg.data.target ? "y" : var;
    std::string csv = dependence_to_csv({});
    for (const auto& m : models) {
      std::vector<Attribution> mine;
      std::copy_if(attrs.begin(), attrs.end(), std::back_inserter(mine), [&](const Attribution& a) { return a.model_id == m; });
      try {
        const std::string part = dependence_to_csv(dependence_curve(mine, internal));
        csv += part.substr(part.find('\n') + 1);
      } catch (const DataError& e) {
        skipped.push_back({{"variable", var}, {"model_id", m}, {"reason", e.what()}});
      }
    }
    io::write_file_atomic(run_dir / ("dependence_" + safe_file_part(var) + ".csv"), csv);
  }

  nlohmann::ordered_json meta;
  meta["value_function"] = "interventional: absent features take background-row values";
  meta["background_rows"] = cfg.explain.options.background_rows;
  meta["n_permutations"] = cfg.explain.options.n_permutations;
  meta["max_exact_features"] = cfg.explain.options.max_exact_features;
  meta["through_factors"] = cfg.explain.options.through_factors;
  meta["grouping"] = "lag attributions are summed per parent variable (signed) per instance; importance is the mean absolute sum";
  meta["dependence_skipped"] = skipped;
  meta["instances"] = nlohmann::ordered_json::array();
  for (const auto& a : attrs) {
    meta["instances"].push_back({{"model_id", a.model_id},
                                 {"target_date", a.target_date.to_string()},
                                 {"method", a.exact ? "exact" : "sampled"},
                                 {"base_value", a.base_value},
                                 {"prediction", a.prediction},
                                 {"adjustment", a.adjustment}});
  }
  io::write_file_atomic(run_dir / "explain_meta.json", meta.dump(2) + "\n");
}

std::string render_report(const fs::path& run_dir) {
  const LoadedRun run = load_run(run_dir);
  const RunConfig cfg = run_config(run, run_dir);
  const auto records = realized(run.records);
  if (records.empty()) throw DataError("the run has no forecasts with realized values");

  std::vector<PeriodSlice> slices;
  for (const auto& s : cfg.evaluation.periods) {
    if (std::any_of(records.begin(), records.end(), [&](const ForecastRecord& r) { return s.contains(r.target_date); })) {
      slices.push_back(s);
    }
  }
  slices.push_back(PeriodSlice::all(records));
  const auto metrics = compute_metrics(records, slices);
  std::vector<std::string> ids;
  for (const auto& m : metrics) {
    if (ids.empty() || ids.back() != m.model_id) ids.push_back(m.model_id);
  }
  auto lookup = [&](const std::string& id, const std::string& period) -> const MetricRow& {
    for (const auto& m : metrics) {
      if (m.model_id == id && m.period == period) return m;
    }
    throw DataError("missing metric row");
  };

  std::ostringstream md;
  md << "# Forecast run report\n\n";
  md << "- Target: " << cfg.data.target << "\n";
  md << "- Config hash: `" << run.manifest.config_hash << "`\n";
  md << "- Seed: " << run.manifest.seed << "\n";
  md << "- Models: " << ids.size() << "\n";
  md << "- Forecast quarters: " << slices.back().start.to_string() << " to " << slices.back().end.to_string() << "\n\n";

  auto table = [&](const std::string& title, auto value) {
    md << "## " << title << "\n\n| Model |";
    for (const auto& s : slices) md << ' ' << s.label << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < slices.size(); ++i) md << "---:|";
    md << '\n';
    for (const auto& id : ids) {
      md << "| " << id << " |";
      for (const auto& s : slices) md << ' ' << value(lookup(id, s.label), s.label) << " |";
      md << '\n';
    }
    md << '\n';
  };
  table("RMSE by period", [](const MetricRow& m, const std::string&) { return m.rmse ? fixed(*m.rmse) : std::string("-"); });
  table("MAE by period", [](const MetricRow& m, const std::string&) { return m.mae ? fixed(*m.mae) : std::string("-"); });
  const std::string& base = cfg.evaluation.baseline;
  if (std::find(ids.begin(), ids.end(), base) != ids.end()) {
    table("RMSE relative to " + base, [&](const MetricRow& m, const std::string& period) {
      const auto& b = lookup(base, period);
      if (!m.rmse || !b.rmse || !(*b.rmse > 0)) return std::string("-");
      return fixed(*m.rmse / *b.rmse);
    });
    for (const auto& [name, metric] : {std::pair{"squared error", ErrorMetric::Squared}, std::pair{"absolute error", ErrorMetric::Absolute}}) {
      try {
        const auto fe = panel_fe_regression(error_cells(records, metric), base, cfg.evaluation.robust_se);
        md << "## Model fixed effects on " << name << " (relative to " << base << ")\n\n";
        md << "| Model | alpha | s.e. | t | p |\n|---|---:|---:|---:|---:|\n";
        for (std::size_t j = 0; j < fe.fit.names.size(); ++j) {
          const auto e = static_cast<Eigen::Index>(j);
          md << "| " << fe.fit.names[j] << " | " << fixed(fe.fit.coef(e)) << " | " << fixed(fe.fit.se(e)) << " | "
             << fixed(fe.fit.t(e), 2) << " | " << fixed(fe.fit.p(e), 3) << " |\n";
        }
        md << '\n';
      } catch (const Error&) {
        // Too few groups or models for the regression.
      }
    }
  }

  const fs::path imp = run_dir / "importance.csv";
  if (fs::exists(imp)) {
    const auto rows = io::read_csv_file(imp);
    // period -> variable -> model -> (value, top)
    std::vector<std::string> periods, models;
    std::map<std::string, std::map<std::string, std::map<std::string, std::pair<double, bool>>>> cells;
    std::map<std::string, std::vector<std::string>> var_order;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& f = rows[i].fields;
      if (f.size() != 7) throw DataError("importance.csv line " + std::to_string(rows[i].line) + ": expected 7 fields");
      const std::string& model = f[0];
      const std::string& period = f[1];
      const std::string& var = f[2];
      if (std::find(periods.begin(), periods.end(), period) == periods.end()) periods.push_back(period);
      if (std::find(models.begin(), models.end(), model) == models.end()) models.push_back(model);
      auto& order = var_order[period];
      if (std::find(order.begin(), order.end(), var) == order.end()) order.push_back(var);
      cells[period][var][model] = {io::parse_real(f[3]).value_or(0.0), f[5] == "1"};
    }
    for (const auto& period : periods) {
      md << "## Mean absolute Shapley value, " << period << " (top five in bold)\n\n| Variable |";
      for (const auto& m : models) md << ' ' << m << " |";
      md << "\n|---|";
      for (std::size_t i = 0; i < models.size(); ++i) md << "---:|";
      md << '\n';
      auto order = var_order[period];
      std::sort(order.begin(), order.end());
      for (const auto& var : order) {
        md << "| " << var << " |";
        for (const auto& m : models) {
          auto it = cells[period][var].find(m);
          if (it == cells[period][var].end()) {
            md << " - |";
          } else if (it->second.second) {
            md << " **" << fixed(it->second.first) << "** |";
          } else {
            md << ' ' << fixed(it->second.first) << " |";
          }
        }
        md << '\n';
      }
      md << '\n';
    }
  }
  return md.str();
}

void cmd_report(const fs::path& run_dir) { io::write_file_atomic(run_dir / "report.md", render_report(run_dir)); }

void cmd_synth(const SynthSpec& spec, const fs::path& out_csv, const fs::path& truth_json) {
  const SynthPanel p = generate_synthetic(spec);
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  io::write_file_atomic(out_csv, p.to_csv());
  if (!truth_json.empty()) {
    if (truth_json.has_parent_path()) fs::create_directories(truth_json.parent_path());
    io::write_file_atomic(truth_json, p.truth().dump(2) + "\n");
  }
}

}  // namespace macrocast
