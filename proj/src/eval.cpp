#include "macrocast/eval.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <iterator>
#include <set>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"

namespace macrocast {

PeriodSlice PeriodSlice::parse(const std::string& text) {
  auto parse_end = [&](const std::string& t, bool start) {
    try {
      if (t.find_first_of("Qq") != std::string::npos) return QuarterDate::parse(t);
      if (t.size() == 4 && std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return QuarterDate{std::stoi(t), start ? 1 : 4};
      }
    } catch (const DataError&) {
    }
    throw ConfigError("cannot parse period '" + text + "' (expected e.g. 1996-1999, 2005Q3-2015Q4 or 2023)");
  };
  PeriodSlice s;
  s.label = text;
  const auto dash = text.find('-');
  if (dash == std::string::npos) {
    s.start = parse_end(text, true);
    s.end = parse_end(text, false);
  } else {
    s.start = parse_end(text.substr(0, dash), true);
    s.end = parse_end(text.substr(dash + 1), false);
  }
  if (s.end < s.start) throw ConfigError("period '" + text + "' ends before it starts");
  return s;
}

std::vector<PeriodSlice> PeriodSlice::presets() {
  std::vector<PeriodSlice> out;
  for (const char* p : {"1996-1999", "1997-1998", "2000-2003", "2004-2009", "2005Q3-2015Q4", "2008-2010", "2014-2019",
                        "2020-2022", "2023"}) {
    out.push_back(parse(p));
  }
  return out;
}

PeriodSlice PeriodSlice::all(const std::vector<ForecastRecord>& records) {
  PeriodSlice s;
  s.label = "all";
  if (records.empty()) return s;
  s.start = s.end = records.front().target_date;
  for (const auto& r : records) {
    s.start = std::min(s.start, r.target_date);
    s.end = std::max(s.end, r.target_date);
  }
  return s;
}

std::vector<MetricRow> compute_metrics(const std::vector<ForecastRecord>& records,
                                       const std::vector<PeriodSlice>& slices) {
  std::map<std::string, std::vector<const ForecastRecord*>> by_model;
  for (const auto& r : records) by_model[r.model_id].push_back(&r);
  std::vector<MetricRow> out;
  for (const auto& [model, recs] : by_model) {
    for (const auto& s : slices) {
      MetricRow row;
      row.model_id = model;
      row.period = s.label;
      double sse = 0.0, sae = 0.0;
      for (const auto* r : recs) {
        if (!s.contains(r->target_date)) continue;
        if (!r->actual) {
          throw DataError("record " + model + " " + r->target_date.to_string() + " in period " + s.label +
                          " has no actual value");
        }
        const double e = *r->actual - r->prediction;
        sse += e * e;
        sae += std::abs(e);
        ++row.n_obs;
      }
      if (row.n_obs > 0) {
        row.rmse = std::sqrt(sse / row.n_obs);
        row.mae = sae / row.n_obs;
      }
      out.push_back(row);
    }
  }
  return out;
}

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::string out = "model_id,period,rmse,mae,n_obs\n";
  for (const auto& r : rows) {
    out += io::csv_escape(r.model_id) + ',' + io::csv_escape(r.period) + ',' + (r.rmse ? io::format_real(*r.rmse) : "") +
           ',' + (r.mae ? io::format_real(*r.mae) : "") + ',' + std::to_string(r.n_obs) + '\n';
  }
  return out;
}

namespace {

double two_sided_p(double t, int df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

RegressionResult ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x_in, bool intercept, bool robust,
                     std::vector<std::string> names) {
  const Eigen::Index n = y.size();
  if (x_in.rows() != n) throw DataError("ols: X has " + std::to_string(x_in.rows()) + " rows, y has " + std::to_string(n));
  Eigen::MatrixXd x(n, x_in.cols() + (intercept ? 1 : 0));
  if (intercept) {
    x.col(0).setOnes();
    x.rightCols(x_in.cols()) = x_in;
  } else {
    x = x_in;
  }
  const Eigen::Index k = x.cols();
  if (k == 0) throw DataError("ols: no regressors");
  if (!x.allFinite() || !y.allFinite()) throw DataError("ols: non-finite input");
  if (n <= k) throw NumericalError("ols: needs more observations (" + std::to_string(n) + ") than regressors (" +
                                   std::to_string(k) + ")");
  if (names.empty()) {
    for (Eigen::Index j = 0; j < x_in.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names.size()) != x_in.cols()) throw DataError("ols: names do not match columns");
  if (intercept) names.insert(names.begin(), "intercept");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-12);
  if (qr.rank() < k) throw NumericalError("ols: design matrix is rank deficient");

  RegressionResult r;
  r.names = std::move(names);
  r.n = static_cast<int>(n);
  r.df = static_cast<int>(n - k);
  r.coef = qr.solve(y);
  const Eigen::VectorXd resid = y - x * r.coef;
  const double rss = resid.squaredNorm();
  r.sigma2 = rss / r.df;
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  Eigen::MatrixXd cov;
  if (robust) {
    const Eigen::MatrixXd meat = x.transpose() * resid.array().square().matrix().asDiagonal() * x;
    cov = xtx_inv * meat * xtx_inv * (static_cast<double>(n) / r.df);
  } else {
    cov = r.sigma2 * xtx_inv;
  }
  r.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.t.resize(k);
  r.p.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (r.se(j) > 0) r.t(j) = r.coef(j) / r.se(j);
    else r.t(j) = r.coef(j) == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.coef(j));
    r.p(j) = two_sided_p(r.t(j), r.df);
  }
  const double tss = intercept ? (y.array() - y.mean()).matrix().squaredNorm() : y.squaredNorm();
  r.r2 = tss > 0 ? 1.0 - rss / tss : 1.0;
  return r;
}

RegressionResult inclusive_test(const Eigen::VectorXd& e_i, const Eigen::VectorXd& e_j, bool intercept) {
  if (e_i.size() != e_j.size()) throw DataError("inclusive test: error series differ in length");
  if (e_i.size() < 5) throw DataError("inclusive test: needs at least 5 aligned errors");
  const Eigen::VectorXd diff = e_i - e_j;
  const double scale = std::max(e_i.cwiseAbs().maxCoeff(), e_j.cwiseAbs().maxCoeff());
  if (diff.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
    throw DataError("inclusive test: degenerate comparison, the two error series are identical");
  }
  if (intercept) {
    const double mean = diff.mean();
    if ((diff.array() - mean).abs().maxCoeff() <= 1e-12 * scale) {
      throw DataError("inclusive test: degenerate comparison, the error difference is constant");
    }
  }
  return ols(e_i, diff, intercept, false, {"diff"});
}

std::vector<PanelCell> error_cells(const std::vector<ForecastRecord>& records, ErrorMetric metric) {
  std::vector<PanelCell> out;
  for (const auto& r : records) {
    if (!r.actual) continue;
    const double e = *r.actual - r.prediction;
    out.push_back({r.model_id, r.target_date, r.horizon, metric == ErrorMetric::Squared ? e * e : std::abs(e)});
  }
  return out;
}

FixedEffectsResult panel_fe_regression(const std::vector<PanelCell>& cells, const std::string& baseline, bool robust) {
  std::set<std::string> model_set;
  for (const auto& c : cells) model_set.insert(c.model_id);
  if (!model_set.count(baseline)) throw ConfigError("panel regression baseline model '" + baseline + "' is absent");
  if (model_set.size() < 2) throw DataError("panel regression needs at least 2 models");
  std::vector<std::string> others;
  for (const auto& m : model_set) {
    if (m != baseline) others.push_back(m);
  }
  std::map<std::string, int> col;
  for (std::size_t j = 0; j < others.size(); ++j) col[others[j]] = static_cast<int>(j);

  using Group = std::pair<int, int>;  // (horizon, target ordinal)
  std::map<Group, std::vector<std::size_t>> groups;
  std::set<std::tuple<std::string, int, int>> seen;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (!std::isfinite(c.value)) throw DataError("panel regression: non-finite value for " + c.model_id);
    if (!seen.insert({c.model_id, c.horizon, c.target_date.ordinal()}).second) {
      throw DataError("panel regression: duplicate cell for " + c.model_id + " at " + c.target_date.to_string());
    }
    groups[{c.horizon, c.target_date.ordinal()}].push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(cells.size());
  const auto k = static_cast<Eigen::Index>(others.size());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, k);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = cells[i].value;
    if (auto it = col.find(cells[i].model_id); it != col.end()) d(static_cast<Eigen::Index>(i), it->second) = 1.0;
  }
  for (const auto& [g, idx] : groups) {
    double ym = 0.0;
    Eigen::RowVectorXd dm = Eigen::RowVectorXd::Zero(k);
    for (auto i : idx) {
      ym += y(static_cast<Eigen::Index>(i));
      dm += d.row(static_cast<Eigen::Index>(i));
    }
    ym /= static_cast<double>(idx.size());
    dm /= static_cast<double>(idx.size());
    for (auto i : idx) {
      y(static_cast<Eigen::Index>(i)) -= ym;
      d.row(static_cast<Eigen::Index>(i)) -= dm;
    }
  }
  FixedEffectsResult out;
  out.baseline = baseline;
  out.fit = ols(y, d, false, robust, others);
  // The group means used up |groups| degrees of freedom.
  const int df = static_cast<int>(n - k - static_cast<Eigen::Index>(groups.size()));
  if (df <= 0) throw NumericalError("panel regression: no residual degrees of freedom");
  const double scale = static_cast<double>(out.fit.df) / df;
  out.fit.df = df;
  out.fit.sigma2 *= scale;
  out.fit.se *= std::sqrt(scale);
  for (Eigen::Index j = 0; j < k; ++j) {
    out.fit.t(j) = out.fit.se(j) > 0 ? out.fit.coef(j) / out.fit.se(j)
                                      : (out.fit.coef(j) == 0 ? 0.0
                                                              : std::copysign(std::numeric_limits<double>::infinity(),
                                                                              out.fit.coef(j)));
    out.fit.p(j) = two_sided_p(out.fit.t(j), df);
  }
  return out;
}

std::vector<ExternalForecast> read_external_csv(const std::filesystem::path& path) {
  const auto rows = io::read_csv_file(path);
  if (rows.empty()) throw DataError(path.string() + ": empty file");
  const auto& h = rows.front().fields;
  const auto find = [&](const std::string& name) {
    const auto it = std::find(h.begin(), h.end(), name);
    if (it == h.end()) throw DataError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - h.begin());
  };
  const std::size_t cd = find("target_date");
  const std::size_t cf = find("forecast");
  std::vector<ExternalForecast> out;
  std::set<int> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    const std::string where = path.string() + " line " + std::to_string(rows[i].line);
    if (f.size() != h.size()) throw DataError(where + ": expected " + std::to_string(h.size()) + " fields");
    QuarterDate q;
    try {
      q = QuarterDate::parse(f[cd]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (f[cf].empty()) continue;
    const auto v = io::parse_real(f[cf]);
    if (!v) throw DataError(where + ": forecast '" + f[cf] + "' is not a number");
    if (!seen.insert(q.ordinal()).second) throw DataError(where + ": duplicate target_date " + q.to_string());
    out.push_back({q, *v});
  }
  return out;
}

std::vector<MetricRow> compare_external(const std::vector<ForecastRecord>& records,
                                        const std::vector<ExternalForecast>& external,
                                        const std::vector<PeriodSlice>& slices, const std::string& external_id) {
  std::map<std::string, std::set<int>> have;
  std::map<int, double> actual;
  for (const auto& r : records) {
    if (r.model_id == external_id) throw ConfigError("external id '" + external_id + "' collides with a model id");
    have[r.model_id];
    if (!r.actual) continue;
    have[r.model_id].insert(r.target_date.ordinal());
    actual[r.target_date.ordinal()] = *r.actual;
  }
  std::set<int> shared;
  for (const auto& e : external) shared.insert(e.target_date.ordinal());
  for (const auto& [m, qs] : have) {
    std::set<int> next;
    std::set_intersection(shared.begin(), shared.end(), qs.begin(), qs.end(), std::inserter(next, next.begin()));
    shared = std::move(next);
  }
  if (shared.empty()) throw DataError("external forecasts share no quarter with the run");

  std::vector<ForecastRecord> joined;
  for (const auto& r : records) {
    if (shared.count(r.target_date.ordinal())) joined.push_back(r);
  }
  for (const auto& e : external) {
    const int q = e.target_date.ordinal();
    if (!shared.count(q)) continue;
    ForecastRecord r;
    r.model_id = external_id;
    r.target_date = e.target_date;
    r.horizon = 1;
    r.origin = e.target_date.prev();
    r.prediction = e.forecast;
    r.actual = actual.at(q);
    joined.push_back(std::move(r));
  }
  return compute_metrics(joined, slices);
}

std::vector<TestRow> regression_rows(const std::string& test, const std::string& subject, const std::string& rival,
                                     const RegressionResult& r) {
  std::vector<TestRow> out;
  for (std::size_t j = 0; j < r.names.size(); ++j) {
    const auto e = static_cast<Eigen::Index>(j);
    out.push_back({test, subject, rival, r.names[j], r.coef(e), r.se(e), r.t(e), r.p(e), r.n, r.df});
  }
  return out;
}

std::string tests_to_csv(const std::vector<TestRow>& rows) {
  std::string out = "test,subject,rival,term,estimate,se,t,p,n,df\n";
  for (const auto& r : rows) {
    out += io::csv_escape(r.test) + ',' + io::csv_escape(r.subject) + ',' + io::csv_escape(r.rival) + ',' +
           io::csv_escape(r.term) + ',' + io::format_real(r.estimate) + ',' + io::format_real(r.se) + ',' +
           io::format_real(r.t) + ',' + io::format_real(r.p) + ',' + std::to_string(r.n) + ',' + std::to_string(r.df) +
           '\n';
  }
  return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> aligned_errors(const std::vector<ForecastRecord>& records,
                                                           const std::string& model_i, const std::string& model_j) {
  std::map<std::pair<int, int>, double> ei, ej;
  for (const auto& r : records) {
    if (!r.actual) continue;
    const double e = *r.actual - r.prediction;
    if (r.model_id == model_i) ei[{r.horizon, r.target_date.ordinal()}] = e;
    if (r.model_id == model_j) ej[{r.horizon, r.target_date.ordinal()}] = e;
  }
  if (ei.empty()) throw DataError("no realized errors for model '" + model_i + "'");
  if (ej.empty()) throw DataError("no realized errors for model '" + model_j + "'");
  std::vector<double> a, b;
  for (const auto& [k, v] : ei) {
    if (auto it = ej.find(k); it != ej.end()) {
      a.push_back(v);
      b.push_back(it->second);
    }
  }
  return {Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())),
          Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()))};
}

}  // namespace macrocast
