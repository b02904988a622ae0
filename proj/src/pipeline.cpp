#include "macrocast/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"
#include "macrocast/learners/cv.hpp"
#include "macrocast/rng.hpp"

namespace macrocast {

std::string_view to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::RawIndicators: return "raw_indicators";
    case FeatureMode::FactorAugmented: return "factor_augmented";
    case FeatureMode::TargetOnly: return "target_only";
  }
  return "raw_indicators";
}

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "raw_indicators") return FeatureMode::RawIndicators;
  if (s == "factor_augmented") return FeatureMode::FactorAugmented;
  if (s == "target_only") return FeatureMode::TargetOnly;
  throw ConfigError("unknown feature mode '" + std::string(s) + "'");
}

void FeatureSpec::validate() const {
  if (p_y < 1) throw ConfigError("p_y must be >= 1");
  if (p_x < 0) throw ConfigError("p_x must be >= 0");
  if (p_f < 0) throw ConfigError("p_f must be >= 0");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
}

nlohmann::ordered_json FeatureSpec::to_json() const {
  nlohmann::ordered_json j;
  j["p_y"] = p_y;
  j["p_x"] = p_x;
  j["p_f"] = p_f;
  j["horizon"] = horizon;
  j["mode"] = std::string(to_string(mode));
  return j;
}

FeatureSpec FeatureSpec::from_json(const nlohmann::json& j) {
  FeatureSpec s;
  for (const auto& [key, v] : j.items()) {
    if (key == "p_y") s.p_y = v.get<int>();
    else if (key == "p_x") s.p_x = v.get<int>();
    else if (key == "p_f") s.p_f = v.get<int>();
    else if (key == "horizon") s.horizon = v.get<int>();
    else if (key == "mode") s.mode = parse_feature_mode(v.get<std::string>());
    else throw ConfigError("unknown feature spec key '" + key + "'");
  }
  s.validate();
  return s;
}

bool LaggedDesign::row_complete(Eigen::Index i) const { return features.row(i).allFinite(); }

LaggedDesign build_design(const Panel& panel, const FeatureSpec& spec, const FactorFit* factors,
                          const std::vector<std::string>& indicators) {
  spec.validate();
  const int ty = panel.column(panel.target_id);
  if (ty < 0) throw DataError("panel has no target column '" + panel.target_id + "'");
  const auto t_rows = static_cast<Eigen::Index>(panel.index.size());
  const Eigen::VectorXd y = panel.values.col(ty);

  LaggedDesign d;
  d.origins = panel.index;
  for (int j = 1; j <= spec.p_y; ++j) d.names.push_back("y_lag" + std::to_string(j));

  std::vector<int> x_cols;
  Eigen::MatrixXd scores;
  if (spec.mode == FeatureMode::RawIndicators) {
    const std::vector<std::string> vars = indicators.empty() ? panel.indicator_columns() : indicators;
    for (const auto& v : vars) {
      const int c = panel.column(v);
      if (c < 0) throw DataError("indicator '" + v + "' is not a panel column");
      if (c == ty) throw DataError("the target cannot also be an indicator");
      x_cols.push_back(c);
      for (int j = 0; j <= spec.p_x; ++j) d.names.push_back(v + "_lag" + std::to_string(j));
    }
  } else if (spec.mode == FeatureMode::FactorAugmented) {
    if (factors == nullptr) throw ConfigError("factor_augmented features need a fitted factor model");
    Eigen::MatrixXd raw(t_rows, static_cast<Eigen::Index>(factors->variables.size()));
    for (std::size_t k = 0; k < factors->variables.size(); ++k) {
      const int c = panel.column(factors->variables[k]);
      if (c < 0) throw DataError("factor variable '" + factors->variables[k] + "' is not a panel column");
      raw.col(static_cast<Eigen::Index>(k)) = panel.values.col(c);
    }
    scores = Eigen::MatrixXd::Constant(t_rows, factors->rank, kMissing);
    for (Eigen::Index i = 0; i < t_rows; ++i) {
      if (raw.row(i).allFinite()) scores.row(i) = factors->transform(raw.row(i));
    }
    for (int k = 1; k <= factors->rank; ++k) {
      for (int j = 0; j <= spec.p_f; ++j) d.names.push_back("F" + std::to_string(k) + "_lag" + std::to_string(j));
    }
  }

  const auto cols = static_cast<Eigen::Index>(d.names.size());
  d.features = Eigen::MatrixXd::Constant(t_rows, cols, kMissing);
  d.targets = Eigen::VectorXd::Constant(t_rows, kMissing);
  for (Eigen::Index i = 0; i < t_rows; ++i) {
    Eigen::Index c = 0;
    for (int j = 1; j <= spec.p_y; ++j, ++c) {
      const Eigen::Index s = i - j + 1;
      if (s >= 0) d.features(i, c) = y(s);
    }
    for (int xc : x_cols) {
      for (int j = 0; j <= spec.p_x; ++j, ++c) {
        if (i - j >= 0) d.features(i, c) = panel.values(i - j, xc);
      }
    }
    for (Eigen::Index k = 0; k < scores.cols(); ++k) {
      for (int j = 0; j <= spec.p_f; ++j, ++c) {
        if (i - j >= 0) d.features(i, c) = scores(i - j, k);
      }
    }
    if (i + spec.horizon < t_rows) d.targets(i) = y(i + spec.horizon);
  }
  return d;
}

Dataset build_features(const Panel& panel, const FeatureSpec& spec, const FactorFit* factors) {
  const LaggedDesign d = build_design(panel, spec, factors);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.origins.size()); ++i) {
    if (d.usable(i)) rows.push_back(i);
  }
  if (rows.empty()) {
    int max_lag = spec.p_y - 1;
    if (spec.mode == FeatureMode::RawIndicators) max_lag = std::max(max_lag, spec.p_x);
    if (spec.mode == FeatureMode::FactorAugmented) max_lag = std::max(max_lag, spec.p_f);
    const auto need = static_cast<std::size_t>(max_lag + spec.horizon + 1);
    if (panel.index.size() < need) {
      throw DataError("no usable rows: panel has " + std::to_string(panel.index.size()) + " quarters but max lag " +
                      std::to_string(max_lag) + " plus horizon " + std::to_string(spec.horizon) + " needs " +
                      std::to_string(need));
    }
    throw DataError("no usable rows: every origin has a missing lag or target value");
  }
  Dataset out;
  out.feature_names = d.names;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), d.features.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = d.features.row(rows[r]);
    out.targets(static_cast<Eigen::Index>(r)) = d.targets(rows[r]);
  }
  return out;
}

std::vector<Segment> BacktestPlan::four_period_segments() {
  return {
      {{1992, 1}, {1996, 1}, {1999, 4}},
      {{1996, 1}, {2000, 1}, {2003, 4}},
      {{2000, 1}, {2004, 1}, {2009, 4}},
      {{2005, 1}, {2010, 1}, {2023, 4}},
  };
}

int BacktestPlan::forecast_quarters() const {
  int n = 0;
  for (const auto& s : segments) n += quarters_between(s.forecast_start, s.forecast_end) + 1;
  return n;
}

void BacktestPlan::validate() const {
  if (segments.empty()) throw ConfigError("backtest plan has no segments");
  if (models.empty()) throw ConfigError("backtest plan has no models");
  if (refit_every < 1) throw ConfigError("refit_every must be >= 1");
  if (min_train_rows < 2) throw ConfigError("min_train_rows must be >= 2");
  if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
  std::vector<Segment> sorted = segments;
  std::sort(sorted.begin(), sorted.end(), [](const Segment& a, const Segment& b) { return a.forecast_start < b.forecast_start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (!(s.train_start < s.forecast_start) || s.forecast_end < s.forecast_start) {
      throw ConfigError("segment " + s.train_start.to_string() + "/" + s.forecast_start.to_string() + "-" +
                        s.forecast_end.to_string() + " needs train_start < forecast_start <= forecast_end");
    }
    if (i > 0 && !(sorted[i - 1].forecast_end < s.forecast_start)) {
      throw ConfigError("segments overlap at " + s.forecast_start.to_string());
    }
  }
  std::vector<std::string> ids;
  for (const auto& m : models) {
    if (m.id.empty()) throw ConfigError("model id must not be empty");
    if (m.grid.empty()) throw ConfigError("model '" + m.id + "' has no hyperparameter spec");
    for (const auto& s : m.grid) s.validate();
    m.features.validate();
    ids.push_back(m.id);
  }
  std::sort(ids.begin(), ids.end());
  if (auto it = std::adjacent_find(ids.begin(), ids.end()); it != ids.end()) {
    throw ConfigError("duplicate model id '" + *it + "'");
  }
}

void BacktestPlan::validate(const Panel& panel) const {
  validate();
  if (panel.index.empty()) throw DataError("panel is empty");
  const QuarterDate first = panel.index.front();
  const QuarterDate last = panel.index.back();
  for (const auto& s : segments) {
    if (s.train_start < first) {
      throw ConfigError("segment train_start " + s.train_start.to_string() + " precedes the panel start " + first.to_string());
    }
    for (const auto& m : models) {
      const QuarterDate end_origin = s.forecast_end.plus(-m.features.horizon);
      if (last < end_origin) {
        throw ConfigError("model '" + m.id + "' needs data through " + end_origin.to_string() + " but the panel ends " +
                          last.to_string());
      }
    }
  }
}

void sort_records(std::vector<ForecastRecord>& records) {
  std::sort(records.begin(), records.end(), [](const ForecastRecord& a, const ForecastRecord& b) {
    if (a.model_id != b.model_id) return a.model_id < b.model_id;
    if (a.target_date != b.target_date) return a.target_date < b.target_date;
    return a.horizon < b.horizon;
  });
}

namespace {

// Fitted state of one refit block.
struct BlockFit {
  std::optional<TrainedModel> model;
  std::optional<FactorFit> factors;
  std::vector<std::string> indicators;
  Eigen::MatrixXd train_x;
  int n_train = 0;
  QuarterDate train_end;
  std::string label;
  std::string hash;
};

QuarterDate window_start(const BacktestPlan& plan, const Segment& seg) {
  if (!plan.continuous_expanding) return seg.train_start;
  QuarterDate s = seg.train_start;
  for (const auto& other : plan.segments) s = std::min(s, other.train_start);
  return s;
}

std::vector<std::string> observed_indicators(const Panel& window) {
  std::vector<std::string> out;
  for (const auto& name : window.indicator_columns()) {
    if (window.values.col(window.column(name)).allFinite()) out.push_back(name);
  }
  return out;
}

// Fits the model whose first forecast target is q0. Returns an empty model
// (with a log entry) when the training window is below the floor.
BlockFit fit_block(const Panel& panel, const BacktestPlan& plan, const ModelEntry& entry, const Segment& seg,
                   QuarterDate q0, TransformLog& log) {
  const FeatureSpec& fs = entry.features;
  const QuarterDate origin = q0.plus(-fs.horizon);
  const Panel window = panel.slice(window_start(plan, seg), origin);

  BlockFit b;
  if (fs.mode != FeatureMode::TargetOnly) {
    b.indicators = observed_indicators(window);
    const auto all = window.indicator_columns().size();
    if (b.indicators.size() < all) {
      log.add("info", "backtest", entry.id, q0.to_string(),
              std::to_string(all - b.indicators.size()) + " indicator(s) not fully observed in the training window were excluded");
    }
  }
  if (fs.mode == FeatureMode::RawIndicators && b.indicators.empty()) {
    throw DataError("no indicator is fully observed in the training window");
  }
  if (fs.mode == FeatureMode::FactorAugmented) {
    if (b.indicators.empty()) throw DataError("no fully observed indicators to extract factors from");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(window.index.size()), static_cast<Eigen::Index>(b.indicators.size()));
    for (std::size_t k = 0; k < b.indicators.size(); ++k) {
      x.col(static_cast<Eigen::Index>(k)) = window.values.col(window.column(b.indicators[k]));
    }
    b.factors = fit_factors(x, b.indicators, entry.rank);
  }

  const LaggedDesign d = build_design(window, fs, b.factors ? &*b.factors : nullptr, b.indicators);
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.origins.size()); ++i) {
    if (d.usable(i)) rows.push_back(static_cast<int>(i));
  }
  b.n_train = static_cast<int>(rows.size());
  if (b.n_train < plan.min_train_rows) {
    log.add("warning", "backtest", entry.id, q0.to_string(),
            "training window has " + std::to_string(b.n_train) + " rows, below the floor of " +
                std::to_string(plan.min_train_rows) + "; forecast skipped");
    return b;
  }
  b.train_end = d.origins[static_cast<std::size_t>(rows.back())];

  Dataset train;
  train.feature_names = d.names;
  train.features.resize(b.n_train, d.features.cols());
  train.targets.resize(b.n_train);
  for (int r = 0; r < b.n_train; ++r) {
    train.features.row(r) = d.features.row(rows[static_cast<std::size_t>(r)]);
    train.targets(r) = d.targets(rows[static_cast<std::size_t>(r)]);
  }

  const std::uint64_t seed =
      rng::derive(plan.seed, {rng::hash_string(entry.id), static_cast<std::uint64_t>(q0.ordinal())});
  std::vector<ModelSpec> grid = entry.grid;
  for (auto& s : grid) s.seed = seed;
  ModelSpec chosen = grid.front();
  if (grid.size() > 1) chosen = cross_validate(train, grid, plan.cv_folds).best;
  b.model = fit_model(chosen, train);
  b.label = chosen.label();
  b.hash = b.model->hash();
  b.train_x = std::move(train.features);
  return b;
}

// Feature row at `origin` under the block's fitted state; nullopt when a
// lag is unavailable.
std::optional<Eigen::RowVectorXd> origin_row(const Panel& panel, const BacktestPlan& plan, const ModelEntry& entry,
                                             const Segment& seg, const BlockFit& b, QuarterDate origin) {
  const Panel window = panel.slice(window_start(plan, seg), origin);
  const LaggedDesign d = build_design(window, entry.features, b.factors ? &*b.factors : nullptr, b.indicators);
  if (d.origins.empty() || d.origins.back() != origin) return std::nullopt;
  const Eigen::Index last = d.features.rows() - 1;
  if (!d.row_complete(last)) return std::nullopt;
  return Eigen::RowVectorXd(d.features.row(last));
}

const Segment& segment_of(const BacktestPlan& plan, QuarterDate q) {
  for (const auto& s : plan.segments) {
    if (!(q < s.forecast_start) && !(s.forecast_end < q)) return s;
  }
  throw ConfigError("quarter " + q.to_string() + " lies outside every backtest segment");
}

QuarterDate block_start(const BacktestPlan& plan, const Segment& seg, QuarterDate q) {
  const int offset = quarters_between(seg.forecast_start, q);
  return seg.forecast_start.plus(offset - offset % plan.refit_every);
}

struct Task {
  const ModelEntry* entry;
  const Segment* segment;
  QuarterDate q0;
  int length;
};

struct TaskResult {
  std::vector<ForecastRecord> records;
  std::vector<FitInfo> fits;
  TransformLog log;
  std::string hash;
  std::exception_ptr error;
};

void run_task(const Panel& panel, const BacktestPlan& plan, const Task& t, TaskResult& out) {
  const ModelEntry& entry = *t.entry;
  const int ty = panel.column(panel.target_id);
  BlockFit b = fit_block(panel, plan, entry, *t.segment, t.q0, out.log);
  if (!b.model) return;
  out.hash = b.hash;
  for (int k = 0; k < t.length; ++k) {
    const QuarterDate q = t.q0.plus(k);
    const QuarterDate origin = q.plus(-entry.features.horizon);
    const auto row = origin_row(panel, plan, entry, *t.segment, b, origin);
    if (!row) {
      out.log.add("warning", "backtest", entry.id, q.to_string(), "feature row at origin " + origin.to_string() +
                                                                   " is incomplete; forecast skipped");
      continue;
    }
    ForecastRecord r;
    r.model_id = entry.id;
    r.origin = origin;
    r.target_date = q;
    r.horizon = entry.features.horizon;
    r.prediction = b.model->predict(std::span<const double>(row->data(), static_cast<std::size_t>(row->size())));
    if (!std::isfinite(r.prediction)) {
      throw NumericalError("model '" + entry.id + "' produced a non-finite forecast for " + q.to_string());
    }
    const int pr = panel.row(q);
    if (pr >= 0 && std::isfinite(panel.values(pr, ty))) r.actual = panel.values(pr, ty);
    out.records.push_back(std::move(r));

    FitInfo f;
    f.model_id = entry.id;
    f.target_date = q;
    f.train_end = b.train_end;
    f.n_train = b.n_train;
    f.n_features = static_cast<int>(b.train_x.cols());
    f.factor_rank = b.factors ? b.factors->rank : 0;
    f.spec_label = b.label;
    f.model_hash = b.hash;
    out.fits.push_back(std::move(f));
  }
}

}  // namespace

BacktestResult run_backtest(const Panel& panel, const BacktestPlan& plan, int workers) {
  plan.validate(panel);
  std::vector<const ModelEntry*> models;
  for (const auto& m : plan.models) models.push_back(&m);
  std::sort(models.begin(), models.end(), [](const ModelEntry* a, const ModelEntry* b) { return a->id < b->id; });
  std::vector<const Segment*> segs;
  for (const auto& s : plan.segments) segs.push_back(&s);
  std::sort(segs.begin(), segs.end(), [](const Segment* a, const Segment* b) { return a->forecast_start < b->forecast_start; });

  std::vector<Task> tasks;
  for (const ModelEntry* m : models) {
    for (const Segment* s : segs) {
      const int n = quarters_between(s->forecast_start, s->forecast_end) + 1;
      for (int k = 0; k < n; k += plan.refit_every) {
        tasks.push_back({m, s, s->forecast_start.plus(k), std::min(plan.refit_every, n - k)});
      }
    }
  }

  std::vector<TaskResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        run_task(panel, plan, tasks[i], results[i]);
      } catch (...) {
        results[i].error = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(workers, 1, static_cast<int>(std::max<std::size_t>(1, tasks.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BacktestResult out;
  std::map<std::string, std::string> joined;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto& r = results[i];
    if (r.error) {
      try {
        std::rethrow_exception(r.error);
      } catch (const Error& e) {
        const std::string where = "model '" + tasks[i].entry->id + "' at " + tasks[i].q0.to_string() + ": ";
        if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(where + e.what());
        if (dynamic_cast<const NumericalError*>(&e)) throw NumericalError(where + e.what());
        throw DataError(where + e.what());
      }
    }
    out.log.append(r.log);
    for (auto& rec : r.records) out.records.push_back(std::move(rec));
    for (auto& f : r.fits) out.fits.push_back(std::move(f));
    if (!r.hash.empty()) joined[tasks[i].entry->id] += r.hash;
  }
  for (const auto& m : plan.models) out.model_hashes[m.id] = io::sha256_hex(joined[m.id]);
  sort_records(out.records);
  return out;
}

OriginFit fit_at_origin(const Panel& panel, const BacktestPlan& plan, const ModelEntry& entry, QuarterDate target) {
  plan.validate(panel);
  const Segment& seg = segment_of(plan, target);
  const QuarterDate q0 = block_start(plan, seg, target);
  TransformLog log;
  BlockFit b = fit_block(panel, plan, entry, seg, q0, log);
  if (!b.model) throw DataError("model '" + entry.id + "' has no fit for " + target.to_string() + " (training window below floor)");
  const auto row = origin_row(panel, plan, entry, seg, b, target.plus(-entry.features.horizon));
  if (!row) throw DataError("feature row for " + target.to_string() + " is incomplete");
  return OriginFit{std::move(*b.model), *row,          std::move(b.train_x), std::move(b.factors),
                   std::move(b.indicators), b.label, window_start(plan, seg), target.plus(-entry.features.horizon)};
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "macrocast.run";
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["created_at"] = created_at;
  j["model_hashes"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : model_hashes) j["model_hashes"][k] = v;
  j["files"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : files) j["files"][k] = v;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "macrocast.run") throw IntegrityError("manifest is not a macrocast run manifest");
  if (j.value("version", 0) != 1) throw IntegrityError("unsupported run manifest version");
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.created_at = j.at("created_at").get<std::string>();
    for (const auto& [k, v] : j.at("model_hashes").items()) m.model_hashes[k] = v.get<std::string>();
    for (const auto& [k, v] : j.at("files").items()) m.files[k] = v.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

std::string records_to_csv(const std::vector<ForecastRecord>& records) {
  std::string out = "model_id,origin,target,horizon,prediction,actual\n";
  for (const auto& r : records) {
    out += io::csv_escape(r.model_id);
    out += ',' + r.origin.to_string() + ',' + r.target_date.to_string() + ',' + std::to_string(r.horizon) + ',' +
           io::format_real(r.prediction) + ',';
    if (r.actual) out += io::format_real(*r.actual);
    out += '\n';
  }
  return out;
}

std::vector<ForecastRecord> records_from_csv(const std::string& text, std::string_view source) {
  std::istringstream in(text);
  const auto rows = io::read_csv(in);
  const std::vector<std::string> header{"model_id", "origin", "target", "horizon", "prediction", "actual"};
  if (rows.empty() || rows.front().fields != header) {
    throw DataError(std::string(source) + ": expected header model_id,origin,target,horizon,prediction,actual");
  }
  std::vector<ForecastRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    const std::string where = std::string(source) + " line " + std::to_string(rows[i].line);
    if (f.size() != 6) throw DataError(where + ": expected 6 fields");
    ForecastRecord r;
    r.model_id = f[0];
    try {
      r.origin = QuarterDate::parse(f[1]);
      r.target_date = QuarterDate::parse(f[2]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    const auto h = io::parse_real(f[3]);
    const auto p = io::parse_real(f[4]);
    if (!h || !p) throw DataError(where + ": horizon and prediction must be numbers");
    r.horizon = static_cast<int>(*h);
    r.prediction = *p;
    if (!f[5].empty()) {
      const auto a = io::parse_real(f[5]);
      if (!a) throw DataError(where + ": actual must be a number or empty");
      r.actual = *a;
    }
    if (r.origin.plus(r.horizon) != r.target_date) throw DataError(where + ": target is not origin + horizon");
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string fits_to_csv(const std::vector<FitInfo>& fits) {
  std::string out = "model_id,target,train_end,n_train,n_features,factor_rank,spec,model_hash\n";
  for (const auto& f : fits) {
    out += io::csv_escape(f.model_id) + ',' + f.target_date.to_string() + ',' + f.train_end.to_string() + ',' +
           std::to_string(f.n_train) + ',' + std::to_string(f.n_features) + ',' + std::to_string(f.factor_rank) + ',' +
           io::csv_escape(f.spec_label) + ',' + f.model_hash + '\n';
  }
  return out;
}

void write_plain(const std::filesystem::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for " + p.string());
}

}  // namespace

void persist_run(const std::filesystem::path& dir, const RunFiles& files, RunManifest manifest) {
  namespace fs = std::filesystem;
  const fs::path target = dir.has_filename() ? dir : dir.parent_path();
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".partial");
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  std::vector<std::pair<std::string, std::string>> contents{
      {"forecasts.csv", records_to_csv(files.records)},
      {"fits.csv", fits_to_csv(files.fits)},
      {"transform_log.jsonl", files.transform_log},
  };
  if (!files.config.empty()) contents.emplace_back("config.json", files.config);
  for (const auto& [name, text] : files.extra) contents.emplace_back(name, text);
  manifest.files.clear();
  for (const auto& [name, text] : contents) {
    write_plain(tmp / name, text);
    manifest.files[name] = io::sha256_hex(text);
  }
  write_plain(tmp / "manifest.json", manifest.to_json().dump(2) + "\n");
  fs::remove_all(target);
  fs::rename(tmp, target);
}

LoadedRun load_run(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw DataError(dir.string() + " is not a run directory (no manifest.json)");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("manifest.json is not valid JSON: " + std::string(e.what()));
  }
  LoadedRun out;
  out.manifest = RunManifest::from_json(j);
  if (!out.manifest.files.count("forecasts.csv")) throw IntegrityError("manifest does not list forecasts.csv");
  std::map<std::string, std::string> text;
  for (const auto& [name, sha] : out.manifest.files) {
    const auto p = dir / name;
    if (!std::filesystem::exists(p)) throw IntegrityError(name + " listed in the manifest is missing");
    text[name] = io::read_file(p);
    if (io::sha256_hex(text[name]) != sha) throw IntegrityError(name + " does not match its manifest hash");
  }
  out.records = records_from_csv(text["forecasts.csv"], (dir / "forecasts.csv").string());
  if (text.count("config.json")) out.config = text["config.json"];
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace macrocast
