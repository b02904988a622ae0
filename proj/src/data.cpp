#include "macrocast/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"

namespace macrocast {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

int yoy_lag(Frequency f) { return f == Frequency::Monthly ? 12 : 4; }

}  // namespace

std::string_view to_string(Frequency f) { return f == Frequency::Monthly ? "monthly" : "quarterly"; }

std::string_view to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::Level: return "level";
    case SeriesKind::YoyPercent: return "yoy_percent";
    case SeriesKind::Index: return "index";
  }
  return "level";
}

Frequency parse_frequency(std::string_view s) {
  const std::string v = lower(trimmed(s));
  if (v == "monthly" || v == "m") return Frequency::Monthly;
  if (v == "quarterly" || v == "q") return Frequency::Quarterly;
  throw DataError("unknown frequency '" + std::string(s) + "'");
}

SeriesKind parse_kind(std::string_view s) {
  const std::string v = lower(trimmed(s));
  if (v == "level") return SeriesKind::Level;
  if (v == "yoy_percent" || v == "yoy") return SeriesKind::YoyPercent;
  if (v == "index") return SeriesKind::Index;
  throw DataError("unknown series kind '" + std::string(s) + "'");
}

ImputeMethod parse_impute_method(std::string_view s) {
  const std::string v = lower(trimmed(s));
  if (v == "forward_fill") return ImputeMethod::ForwardFill;
  if (v == "ar_fill") return ImputeMethod::ArFill;
  throw ConfigError("unknown imputation method '" + std::string(s) + "' (forward_fill | ar_fill)");
}

std::string RawSeries::date_label(int period) const {
  return frequency == Frequency::Monthly ? MonthDate::from_ordinal(period).to_string()
                                         : QuarterDate::from_ordinal(period).to_string();
}

std::size_t RawSeries::observed_count() const {
  return static_cast<std::size_t>(
      std::count_if(observations.begin(), observations.end(), [](const Observation& o) { return !is_missing(o.value); }));
}

void RawSeries::validate() const {
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (i > 0 && observations[i].period <= observations[i - 1].period) {
      throw DataError("series '" + id + "': dates not strictly increasing at " + date_label(observations[i].period));
    }
    if (std::isinf(observations[i].value)) {
      throw DataError("series '" + id + "': non-finite value at " + date_label(observations[i].period));
    }
  }
}

RawSeries regularized(const RawSeries& s) {
  RawSeries out{s.id, s.frequency, s.kind, {}};
  if (s.observations.empty()) return out;
  const int first = s.observations.front().period;
  const int last = s.observations.back().period;
  out.observations.reserve(static_cast<std::size_t>(last - first + 1));
  std::size_t j = 0;
  for (int p = first; p <= last; ++p) {
    if (j < s.observations.size() && s.observations[j].period == p) {
      out.observations.push_back(s.observations[j++]);
    } else {
      out.observations.push_back({p, kMissing});
    }
  }
  return out;
}

// --- TransformLog ---------------------------------------------------------

void TransformLog::add(std::string level, std::string op, std::string variable, std::string date,
                       std::string message) {
  entries_.push_back({std::move(level), std::move(op), std::move(variable), std::move(date), std::move(message)});
}

void TransformLog::append(const TransformLog& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

std::size_t TransformLog::warning_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const LogEntry& e) { return e.level == "warning"; }));
}

std::string TransformLog::to_jsonl() const {
  std::string out;
  for (const auto& e : entries_) {
    nlohmann::ordered_json j;
    j["level"] = e.level;
    j["op"] = e.op;
    j["variable"] = e.variable;
    j["date"] = e.date;
    j["message"] = e.message;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// --- CSV ingestion --------------------------------------------------------

std::vector<RawSeries> parse_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_csv(in, path.string(), schema);
}

std::vector<RawSeries> parse_csv(std::istream& in, std::string_view source, const CsvSchema& schema) {
  const auto rows = io::read_csv(in);
  const std::string src(source);
  if (rows.empty()) throw DataError(src + ": empty file (header required)");

  const auto& header = rows.front().fields;
  auto find_col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string h = trimmed(header[i]);
      if (i == 0 && h.size() >= 3 && h.compare(0, 3, "\xEF\xBB\xBF") == 0) h = h.substr(3);  // UTF-8 BOM
      if (h == name) return static_cast<int>(i);
    }
    throw DataError(src + ": missing column '" + name + "' in header");
  };
  const int c_date = find_col(schema.date);
  const int c_var = find_col(schema.variable);
  const int c_val = find_col(schema.value);
  const int c_freq = find_col(schema.frequency);
  const int c_kind = find_col(schema.kind);
  const std::size_t needed = static_cast<std::size_t>(std::max({c_date, c_var, c_val, c_freq, c_kind})) + 1;

  std::vector<RawSeries> series;
  std::unordered_map<std::string, std::size_t> slot;
  std::unordered_map<std::string, std::map<int, std::size_t>> seen_dates;  // variable -> period -> line

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = src + " line " + std::to_string(row.line);
    if (row.fields.size() < needed) throw DataError(where + ": expected at least " + std::to_string(needed) + " fields");
    const std::string var = trimmed(row.fields[c_var]);
    if (var.empty()) throw DataError(where + ": empty variable id");

    Frequency freq;
    SeriesKind kind;
    try {
      freq = parse_frequency(row.fields[c_freq]);
      kind = parse_kind(row.fields[c_kind]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }

    int period = 0;
    try {
      period = freq == Frequency::Monthly ? MonthDate::parse(row.fields[c_date]).ordinal()
                                          : QuarterDate::parse(row.fields[c_date]).ordinal();
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }

    double value = kMissing;
    const std::string raw = trimmed(row.fields[c_val]);
    if (!raw.empty() && lower(raw) != "na" && lower(raw) != "nan") {
      auto v = io::parse_real(raw);
      if (!v || std::isinf(*v)) throw DataError(where + ": unparseable value '" + raw + "'");
      value = *v;
    }

    auto it = slot.find(var);
    if (it == slot.end()) {
      it = slot.emplace(var, series.size()).first;
      series.push_back(RawSeries{var, freq, kind, {}});
    }
    RawSeries& s = series[it->second];
    if (s.frequency != freq || s.kind != kind) {
      throw DataError(where + ": variable '" + var + "' changes frequency or kind");
    }
    auto [pos, inserted] = seen_dates[var].emplace(period, row.line);
    if (!inserted) {
      throw DataError(where + ": duplicate (" + var + ", " + s.date_label(period) + "), first seen at line " +
                      std::to_string(pos->second));
    }
    s.observations.push_back({period, value});
  }

  for (auto& s : series) {
    std::sort(s.observations.begin(), s.observations.end(),
              [](const Observation& a, const Observation& b) { return a.period < b.period; });
    s.validate();
  }
  return series;
}

// --- transforms -----------------------------------------------------------

RawSeries to_yoy(const RawSeries& s, TransformLog* log) {
  const int lag = yoy_lag(s.frequency);
  const RawSeries reg = regularized(s);
  if (static_cast<int>(reg.observations.size()) <= lag) {
    throw DataError("to_yoy: series '" + s.id + "' needs more than " + std::to_string(lag) +
                    " periods of history, has " + std::to_string(reg.observations.size()));
  }
  RawSeries out{s.id, s.frequency, SeriesKind::YoyPercent, {}};
  out.observations.reserve(reg.observations.size() - static_cast<std::size_t>(lag));
  for (std::size_t i = static_cast<std::size_t>(lag); i < reg.observations.size(); ++i) {
    const double x = reg.observations[i].value;
    const double base = reg.observations[i - static_cast<std::size_t>(lag)].value;
    double v = kMissing;
    if (!is_missing(x) && !is_missing(base)) {
      if (base == 0.0) {
        if (log) log->add("warning", "to_yoy", s.id, s.date_label(reg.observations[i].period), "zero denominator");
      } else {
        v = 100.0 * (x / base - 1.0);
      }
    }
    out.observations.push_back({reg.observations[i].period, v});
  }
  return out;
}

RawSeries monthly_to_quarterly(const RawSeries& s) {
  if (s.frequency == Frequency::Quarterly) return s;
  RawSeries out{s.id, Frequency::Quarterly, s.kind, {}};
  if (s.observations.empty()) return out;
  const int q_first = MonthDate::from_ordinal(s.observations.front().period).quarter().ordinal();
  const int q_last = MonthDate::from_ordinal(s.observations.back().period).quarter().ordinal();
  std::vector<double> sum(static_cast<std::size_t>(q_last - q_first + 1), 0.0);
  std::vector<int> count(sum.size(), 0);
  for (const auto& o : s.observations) {
    if (is_missing(o.value)) continue;
    const auto k = static_cast<std::size_t>(MonthDate::from_ordinal(o.period).quarter().ordinal() - q_first);
    sum[k] += o.value;
    ++count[k];
  }
  out.observations.reserve(sum.size());
  for (std::size_t k = 0; k < sum.size(); ++k) {
    out.observations.push_back({q_first + static_cast<int>(k), count[k] > 0 ? sum[k] / count[k] : kMissing});
  }
  return out;
}

std::optional<ArFit> fit_ar_aic(const std::vector<double>& values, int max_order) {
  const int n = static_cast<int>(values.size());
  // Shrink the maximum order until the common sample supports a fit with
  // at least two residual degrees of freedom.
  for (int pmax = max_order; pmax >= 1; --pmax) {
    std::vector<int> rows;
    for (int t = pmax; t < n; ++t) {
      bool ok = !is_missing(values[t]);
      for (int k = 1; ok && k <= pmax; ++k) ok = !is_missing(values[t - k]);
      if (ok) rows.push_back(t);
    }
    const int m = static_cast<int>(rows.size());
    if (m < pmax + 3) continue;

    std::optional<ArFit> best;
    for (int p = 1; p <= pmax; ++p) {
      Eigen::MatrixXd X(m, p + 1);
      Eigen::VectorXd y(m);
      for (int i = 0; i < m; ++i) {
        const int t = rows[i];
        X(i, 0) = 1.0;
        for (int k = 1; k <= p; ++k) X(i, k) = values[t - k];
        y(i) = values[t];
      }
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
      const Eigen::VectorXd beta = cod.solve(y);
      const double rss = (y - X * beta).squaredNorm();
      const double aic = m * std::log(std::max(rss / m, 1e-300)) + 2.0 * (p + 1);
      if (!best || aic < best->aic) {
        ArFit fit;
        fit.order = p;
        fit.intercept = beta(0);
        fit.coefficients.assign(beta.data() + 1, beta.data() + 1 + p);
        fit.aic = aic;
        best = fit;
      }
    }
    return best;
  }
  return std::nullopt;
}

RawSeries impute(const RawSeries& s, ImputeMethod method, TransformLog* log) {
  RawSeries out = regularized(s);
  auto& obs = out.observations;
  const int n = static_cast<int>(obs.size());
  int first = -1, last = -1;
  for (int i = 0; i < n; ++i) {
    if (!is_missing(obs[i].value)) {
      if (first < 0) first = i;
      last = i;
    }
  }
  if (first < 0) return out;

  std::optional<ArFit> ar;
  if (method == ImputeMethod::ArFill) {
    if (out.observed_count() < 8) {
      if (log) log->add("warning", "impute", s.id, "", "ar_fill needs >= 8 observations; falling back to forward_fill");
    } else {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) v[i] = obs[i].value;
      ar = fit_ar_aic(v, 4);
      if (!ar && log) log->add("warning", "impute", s.id, "", "no complete AR windows; falling back to forward_fill");
    }
  }

  for (int t = first + 1; t < last; ++t) {
    if (!is_missing(obs[t].value)) continue;
    double fill = obs[t - 1].value;  // forward fill
    const char* how = "forward_fill";
    if (ar && t - ar->order >= first) {
      fill = ar->intercept;
      for (int k = 1; k <= ar->order; ++k) fill += ar->coefficients[k - 1] * obs[t - k].value;
      how = "ar_fill";
    }
    obs[t].value = fill;
    if (log) log->add("info", "impute", s.id, out.date_label(obs[t].period), how);
  }
  return out;
}

// --- Panel ----------------------------------------------------------------

int Panel::column(std::string_view id) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] == id) return static_cast<int>(j);
  }
  return -1;
}

int Panel::row(QuarterDate date) const {
  if (index.empty()) return -1;
  const int r = quarters_between(index.front(), date);
  return (r >= 0 && r < static_cast<int>(index.size())) ? r : -1;
}

Eigen::VectorXd Panel::target() const {
  const int c = column(target_id);
  if (c < 0) throw DataError("panel has no target column '" + target_id + "'");
  return values.col(c);
}

std::vector<std::string> Panel::indicator_columns() const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (c != target_id) out.push_back(c);
  }
  return out;
}

Panel Panel::slice(QuarterDate start, QuarterDate end) const {
  Panel out;
  out.columns = columns;
  out.target_id = target_id;
  int r0 = 0, r1 = -1;
  if (!index.empty()) {
    r0 = std::max(0, quarters_between(index.front(), start));
    r1 = std::min(static_cast<int>(index.size()) - 1, quarters_between(index.front(), end));
  }
  const int rows = std::max(0, r1 - r0 + 1);
  out.index.assign(index.begin() + r0, index.begin() + r0 + rows);
  out.values = values.middleRows(r0, rows);
  out.first_valid.assign(columns.size(), std::nullopt);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    for (int i = 0; i < rows; ++i) {
      if (!is_missing(out.values(i, static_cast<Eigen::Index>(j)))) {
        out.first_valid[j] = out.index[i];
        break;
      }
    }
  }
  return out;
}

void Panel::validate() const {
  if (values.rows() != static_cast<Eigen::Index>(index.size()) ||
      values.cols() != static_cast<Eigen::Index>(columns.size())) {
    throw DataError("panel shape does not match index/columns");
  }
  if (column(target_id) < 0) throw DataError("panel has no target column '" + target_id + "'");
  for (std::size_t i = 1; i < index.size(); ++i) {
    if (index[i] != index[i - 1].next()) throw DataError("panel index is not contiguous at " + index[i].to_string());
  }
}

Panel assemble_panel(const std::vector<RawSeries>& series, const std::string& target_id, QuarterDate start,
                     QuarterDate end) {
  if (end < start) throw ConfigError("panel window end " + end.to_string() + " precedes start " + start.to_string());
  const RawSeries* target = nullptr;
  for (const auto& s : series) {
    if (s.id == target_id) target = &s;
  }
  if (!target) throw DataError("target series '" + target_id + "' not found");
  if (target->frequency != Frequency::Quarterly) throw DataError("target series '" + target_id + "' must be quarterly");

  Panel panel;
  panel.target_id = target_id;
  const int rows = quarters_between(start, end) + 1;
  for (int i = 0; i < rows; ++i) panel.index.push_back(start.plus(i));
  panel.values = Eigen::MatrixXd::Constant(rows, static_cast<Eigen::Index>(series.size()), kMissing);
  panel.first_valid.assign(series.size(), std::nullopt);

  for (std::size_t j = 0; j < series.size(); ++j) {
    const RawSeries q = monthly_to_quarterly(series[j]);
    for (std::size_t k = 0; k < j; ++k) {
      if (panel.columns[k] == q.id) throw DataError("duplicate series id '" + q.id + "'");
    }
    panel.columns.push_back(q.id);
    for (const auto& o : q.observations) {
      const int r = o.period - start.ordinal();
      if (r >= 0 && r < rows) panel.values(r, static_cast<Eigen::Index>(j)) = o.value;
    }
    for (int r = 0; r < rows; ++r) {
      if (!is_missing(panel.values(r, static_cast<Eigen::Index>(j)))) {
        panel.first_valid[j] = panel.index[r];
        break;
      }
    }
  }

  const int tc = panel.column(target_id);
  for (int r = 0; r < rows; ++r) {
    if (is_missing(panel.values(r, tc))) {
      throw DataError("target '" + target_id + "' is missing at " + panel.index[r].to_string() +
                      " inside the panel window");
    }
  }
  return panel;
}

Panel prepare_panel(const std::vector<RawSeries>& series, const std::string& target_id, QuarterDate start,
                    QuarterDate end, ImputeMethod method, TransformLog* log) {
  std::vector<RawSeries> ready;
  ready.reserve(series.size());
  for (const auto& s : series) {
    RawSeries t = s.kind == SeriesKind::Level ? to_yoy(s, log) : s;
    ready.push_back(impute(t, method, log));
  }
  return assemble_panel(ready, target_id, start, end);
}

std::string panel_to_csv(const Panel& panel) {
  std::string out = "date";
  for (const auto& c : panel.columns) {
    out += ',';
    out += io::csv_escape(c);
  }
  out += '\n';
  for (std::size_t i = 0; i < panel.index.size(); ++i) {
    out += panel.index[i].to_string();
    for (Eigen::Index j = 0; j < panel.values.cols(); ++j) {
      out += ',';
      const double v = panel.values(static_cast<Eigen::Index>(i), j);
      if (!is_missing(v)) out += io::format_real(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace macrocast
