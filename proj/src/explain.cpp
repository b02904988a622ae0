#include "macrocast/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"
#include "macrocast/rng.hpp"

namespace macrocast {

BatchPredictor predictor_of(const TrainedModel& model) {
  return [&model](const Eigen::MatrixXd& rows) { return model.predict(rows); };
}

double Attribution::reconstructed() const { return base_value + std::accumulate(phi.begin(), phi.end(), 0.0); }

namespace {

void check_inputs(std::span<const double> instance, const Eigen::MatrixXd& background, std::vector<std::string>& names) {
  const auto d = static_cast<Eigen::Index>(instance.size());
  if (d == 0) throw DataError("cannot attribute a prediction with no features");
  if (background.rows() == 0) throw DataError("Shapley background is empty");
  if (background.cols() != d) throw DataError("background and instance differ in feature count");
  if (names.empty()) {
    for (Eigen::Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  }
  if (static_cast<Eigen::Index>(names.size()) != d) throw DataError("feature names do not match the instance");
}

Attribution make_attribution(std::span<const double> instance, std::vector<std::string> names) {
  Attribution a;
  a.features = std::move(names);
  a.feature_values.assign(instance.begin(), instance.end());
  a.phi.assign(instance.size(), 0.0);
  a.se.assign(instance.size(), 0.0);
  return a;
}

}  // namespace

Attribution shapley_exact(const BatchPredictor& f, std::span<const double> instance, const Eigen::MatrixXd& background,
                          std::vector<std::string> names) {
  check_inputs(instance, background, names);
  const int d = static_cast<int>(instance.size());
  if (d > kMaxExactFeatures) {
    throw ConfigError("exact Shapley enumeration supports at most " + std::to_string(kMaxExactFeatures) +
                      " features (got " + std::to_string(d) + "); use the sampled estimator");
  }
  const std::size_t n_masks = std::size_t{1} << d;
  std::vector<double> v(n_masks);
  Eigen::MatrixXd rows(background.rows(), d);
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    rows = background;
    for (int j = 0; j < d; ++j) {
      if (mask >> j & 1U) rows.col(j).setConstant(instance[static_cast<std::size_t>(j)]);
    }
    v[mask] = f(rows).mean();
  }
  // |S|! (d - |S| - 1)! / d!
  std::vector<double> w(static_cast<std::size_t>(d));
  for (int s = 0; s < d; ++s) {
    w[static_cast<std::size_t>(s)] = std::exp(std::lgamma(s + 1.0) + std::lgamma(d - s + 0.0) - std::lgamma(d + 1.0));
  }
  Attribution a = make_attribution(instance, std::move(names));
  for (int i = 0; i < d; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double phi = 0.0;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      phi += w[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
    }
    a.phi[static_cast<std::size_t>(i)] = phi;
  }
  a.base_value = v.front();
  a.prediction = v.back();
  a.exact = true;
  return a;
}

Attribution shapley_sampled(const BatchPredictor& f, std::span<const double> instance, const Eigen::MatrixXd& background,
                            int n_permutations, std::uint64_t seed, std::vector<std::string> names) {
  check_inputs(instance, background, names);
  if (n_permutations < 64) throw ConfigError("sampled Shapley needs at least 64 permutations");
  const int d = static_cast<int>(instance.size());
  const auto b_rows = static_cast<int>(background.rows());
  const int pairs = (n_permutations / 2 + b_rows - 1) / b_rows * b_rows;

  Eigen::RowVectorXd x(d);
  for (int j = 0; j < d; ++j) x(j) = instance[static_cast<std::size_t>(j)];
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd path(d + 1, d);
  std::vector<int> perm(static_cast<std::size_t>(d));
  Eigen::VectorXd contrib(d);

  for (int p = 0; p < pairs; ++p) {
    rng::Stream s(rng::derive(seed, {static_cast<std::uint64_t>(p)}));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = d - 1; i > 0; --i) {
      std::swap(perm[static_cast<std::size_t>(i)], perm[s.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    contrib.setZero();
    for (int side = 0; side < 2; ++side) {
      path.row(0) = background.row(p % b_rows);
      for (int k = 0; k < d; ++k) {
        const int j = perm[static_cast<std::size_t>(side == 0 ? k : d - 1 - k)];
        path.row(k + 1) = path.row(k);
        path(k + 1, j) = x(j);
      }
      const Eigen::VectorXd v = f(path);
      for (int k = 0; k < d; ++k) {
        const int j = perm[static_cast<std::size_t>(side == 0 ? k : d - 1 - k)];
        contrib(j) += 0.5 * (v(k + 1) - v(k));
      }
    }
    sum += contrib;
    sum_sq += contrib.cwiseProduct(contrib);
  }

  Attribution a = make_attribution(instance, std::move(names));
  const double n = pairs;
  for (int j = 0; j < d; ++j) {
    const double mean = sum(j) / n;
    const double var = pairs > 1 ? std::max(0.0, (sum_sq(j) - n * mean * mean) / (n - 1)) : 0.0;
    a.phi[static_cast<std::size_t>(j)] = mean;
    a.se[static_cast<std::size_t>(j)] = std::sqrt(var / n);
  }
  a.base_value = f(background).mean();
  a.prediction = f(Eigen::MatrixXd(x))(0);
  a.exact = false;

  const double residual = a.prediction - a.reconstructed();
  double mass = 0.0;
  for (double v : a.phi) mass += std::abs(v);
  for (std::size_t j = 0; j < a.phi.size(); ++j) {
    a.phi[j] += mass > 0 ? residual * std::abs(a.phi[j]) / mass : residual / static_cast<double>(d);
  }
  a.adjustment = std::abs(residual);
  return a;
}

Attribution shapley_auto(const BatchPredictor& f, std::span<const double> instance, const Eigen::MatrixXd& background,
                         std::uint64_t seed, std::vector<std::string> names, int n_permutations) {
  if (static_cast<int>(instance.size()) <= kMaxExactFeatures) return shapley_exact(f, instance, background, std::move(names));
  return shapley_sampled(f, instance, background, n_permutations, seed, std::move(names));
}

Eigen::MatrixXd select_background(const Eigen::MatrixXd& rows, int max_rows, std::uint64_t seed) {
  if (max_rows < 1) throw ConfigError("background size must be >= 1");
  const auto n = static_cast<int>(rows.rows());
  if (n <= max_rows) return rows;
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng::Stream s(seed);
  for (int i = 0; i < max_rows; ++i) {
    const auto j = static_cast<std::size_t>(i) + s.below(static_cast<std::uint64_t>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(max_rows));
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd out(max_rows, rows.cols());
  for (int i = 0; i < max_rows; ++i) out.row(i) = rows.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

std::string parent_variable(const std::string& feature) {
  static const std::regex lag("^(.*)_lag[0-9]+$");
  std::smatch m;
  if (std::regex_match(feature, m, lag)) return m[1].str();
  return feature;
}

namespace {

// Signed per-variable sums of one attribution, in first-appearance order.
std::vector<std::pair<std::string, double>> grouped(const Attribution& a) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t j = 0; j < a.features.size(); ++j) {
    const std::string v = parent_variable(a.features[j]);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == v; });
    if (it == out.end()) out.emplace_back(v, a.phi[j]);
    else it->second += a.phi[j];
  }
  return out;
}

}  // namespace

std::vector<ImportanceRow> aggregate_importance(const std::vector<Attribution>& attributions,
                                                const std::vector<PeriodSlice>& slices,
                                                const std::vector<std::string>& variables, int top_k,
                                                const std::map<std::string, std::string>& rename) {
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  const std::set<std::string> allowed(variables.begin(), variables.end());
  auto display = [&](const std::string& v) {
    auto it = rename.find(v);
    return it == rename.end() ? v : it->second;
  };
  std::map<std::string, std::vector<const Attribution*>> by_model;
  for (const auto& a : attributions) by_model[a.model_id].push_back(&a);

  std::vector<ImportanceRow> out;
  for (const auto& [model, list] : by_model) {
    for (const auto& slice : slices) {
      std::vector<std::string> order;
      std::map<std::string, double> total;
      int n = 0;
      for (const auto* a : list) {
        if (!slice.contains(a->target_date)) continue;
        ++n;
        for (const auto& [v, phi] : grouped(*a)) {
          const std::string name = display(v);
          if (!allowed.empty() && !allowed.count(name)) {
            throw DataError("variable '" + name + "' (from model " + model + ") is not in the requested grouping");
          }
          if (!total.count(name)) order.push_back(name);
          total[name] += std::abs(phi);
        }
      }
      if (n == 0) continue;
      std::vector<ImportanceRow> rows;
      for (const auto& v : order) rows.push_back({model, v, slice.label, total[v] / n, 0, false, n});
      std::stable_sort(rows.begin(), rows.end(), [](const ImportanceRow& a, const ImportanceRow& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.variable < b.variable;
      });
      const int k = std::min<int>(top_k, static_cast<int>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].rank = static_cast<int>(i) + 1;
        rows[i].top = static_cast<int>(i) < k;
      }
      out.insert(out.end(), rows.begin(), rows.end());
    }
  }
  return out;
}

double silverman_bandwidth(std::span<const double> x) {
  const auto n = x.size();
  if (n < 2) return 1.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, n - 1);
    return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  const double iqr = (quantile(0.75) - quantile(0.25)) / 1.34;
  double spread = std::min(sd, iqr);
  if (!(spread > 0)) spread = std::max(sd, iqr);
  if (!(spread > 0)) return 1.0;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

std::vector<CurvePoint> local_linear(std::span<const double> x, std::span<const double> y, std::span<const double> at,
                                     double bandwidth) {
  if (x.size() != y.size()) throw DataError("local_linear: x and y differ in length");
  if (!(bandwidth > 0)) throw ConfigError("bandwidth must be > 0");
  std::vector<CurvePoint> out;
  for (double x0 : at) {
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = (x[i] - x0) / bandwidth;
      const double w = std::exp(-0.5 * u * u);
      const double d = x[i] - x0;
      s0 += w;
      s1 += w * d;
      s2 += w * d * d;
      t0 += w * y[i];
      t1 += w * d * y[i];
    }
    const double det = s0 * s2 - s1 * s1;
    double fit;
    if (det > 1e-12 * s0 * s2 && det > 0) fit = (s2 * t0 - s1 * t1) / det;
    else fit = s0 > 0 ? t0 / s0 : 0.0;
    out.push_back({x0, fit});
  }
  return out;
}

DependenceCurve dependence_curve(const std::vector<Attribution>& attributions, const std::string& variable,
                                 int grid_points) {
  DependenceCurve c;
  c.variable = variable;
  for (const auto& a : attributions) {
    double phi = 0.0;
    std::optional<double> value;
    for (std::size_t j = 0; j < a.features.size(); ++j) {
      if (parent_variable(a.features[j]) != variable) continue;
      phi += a.phi[j];
      if (!value) value = a.feature_values[j];
    }
    if (value) c.points.push_back({a.model_id, a.target_date, *value, phi});
  }
  if (c.points.size() < 5) {
    throw DataError("dependence curve for '" + variable + "' needs at least 5 attributions (got " +
                    std::to_string(c.points.size()) + ")");
  }
  std::stable_sort(c.points.begin(), c.points.end(), [](const DependencePoint& a, const DependencePoint& b) {
    if (a.target_date != b.target_date) return a.target_date < b.target_date;
    return a.model_id < b.model_id;
  });
  std::vector<double> xs, ys;
  for (const auto& p : c.points) {
    xs.push_back(p.value);
    ys.push_back(p.phi);
  }
  c.bandwidth = silverman_bandwidth(xs);
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  std::vector<double> grid;
  const int g = *hi > *lo ? std::max(2, grid_points) : 1;
  for (int i = 0; i < g; ++i) grid.push_back(g == 1 ? *lo : *lo + (*hi - *lo) * i / (g - 1));
  c.smooth = local_linear(xs, ys, grid, c.bandwidth);
  return c;
}

std::string attributions_to_csv(const std::vector<Attribution>& attributions) {
  std::string out = "model_id,target_date,variable,phi\n";
  for (const auto& a : attributions) {
    for (std::size_t j = 0; j < a.features.size(); ++j) {
      out += io::csv_escape(a.model_id) + ',' + a.target_date.to_string() + ',' + io::csv_escape(a.features[j]) + ',' +
             io::format_real(a.phi[j]) + '\n';
    }
  }
  return out;
}

std::string importance_to_csv(const std::vector<ImportanceRow>& rows) {
  std::string out = "model_id,period,variable,value,rank,top,n_instances\n";
  for (const auto& r : rows) {
    out += io::csv_escape(r.model_id) + ',' + io::csv_escape(r.period) + ',' + io::csv_escape(r.variable) + ',' +
           io::format_real(r.value) + ',' + std::to_string(r.rank) + ',' + (r.top ? "1" : "0") + ',' +
           std::to_string(r.n_instances) + '\n';
  }
  return out;
}

std::string dependence_to_csv(const DependenceCurve& c) {
  std::string out = "series,model_id,target_date,value,phi\n";
  for (const auto& p : c.points) {
    out += "point," + io::csv_escape(p.model_id) + ',' + p.target_date.to_string() + ',' + io::format_real(p.value) +
           ',' + io::format_real(p.phi) + '\n';
  }
  // smooth rows carry the model id when the curve belongs to one model
  std::string owner;
  if (!c.points.empty() && std::all_of(c.points.begin(), c.points.end(),
                                       [&](const DependencePoint& p) { return p.model_id == c.points.front().model_id; })) {
    owner = io::csv_escape(c.points.front().model_id);
  }
  for (const auto& p : c.smooth) out += "smooth," + owner + ",," + io::format_real(p.x) + ',' + io::format_real(p.y) + '\n';
  return out;
}

Attribution explain_forecast(const Panel& panel, const BacktestPlan& plan, const ModelEntry& entry, QuarterDate target,
                             const ExplainOptions& options) {
  OriginFit fit = fit_at_origin(panel, plan, entry, target);
  const std::uint64_t seed = rng::derive(plan.seed, {rng::hash_string(entry.id), static_cast<std::uint64_t>(target.ordinal()),
                                                     rng::hash_string("shapley")});
  const FeatureSpec& fs = entry.features;

  Eigen::MatrixXd train;
  Eigen::RowVectorXd instance;
  std::vector<std::string> names;
  BatchPredictor f;
  const TrainedModel& model = fit.model;

  if (fs.mode == FeatureMode::FactorAugmented && options.through_factors && fit.factors) {
    const Panel window = panel.slice(fit.window_start, fit.origin);
    FeatureSpec raw = fs;
    raw.mode = FeatureMode::RawIndicators;
    raw.p_x = fs.p_f;
    const LaggedDesign d = build_design(window, raw, nullptr, fit.indicators);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d.origins.size()); ++i) {
      if (d.usable(i)) rows.push_back(i);
    }
    train.resize(static_cast<Eigen::Index>(rows.size()), d.features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) train.row(static_cast<Eigen::Index>(r)) = d.features.row(rows[r]);
    instance = d.features.row(d.features.rows() - 1);
    names = d.names;

    const FactorFit factors = *fit.factors;
    const int p_y = fs.p_y;
    const int lags = fs.p_f + 1;
    const auto nv = static_cast<Eigen::Index>(fit.indicators.size());
    f = [&model, factors, p_y, lags, nv](const Eigen::MatrixXd& x) {
      const int r = factors.rank;
      Eigen::MatrixXd design(x.rows(), p_y + r * lags);
      design.leftCols(p_y) = x.leftCols(p_y);
      Eigen::MatrixXd lagged(x.rows(), nv);
      for (int j = 0; j < lags; ++j) {
        for (Eigen::Index v = 0; v < nv; ++v) lagged.col(v) = x.col(p_y + v * lags + j);
        const Eigen::MatrixXd s = factors.transform(lagged);
        for (int k = 0; k < r; ++k) design.col(p_y + k * lags + j) = s.col(k);
      }
      return model.predict(design);
    };
  } else {
    train = fit.train_x;
    instance = fit.instance;
    names = model.feature_names();
    f = predictor_of(model);
  }

  const Eigen::MatrixXd background = select_background(train, options.background_rows, rng::derive(seed, {0}));
  const std::span<const double> x(instance.data(), static_cast<std::size_t>(instance.size()));
  Attribution a = static_cast<int>(x.size()) <= options.max_exact_features
                      ? shapley_exact(f, x, background, names)
                      : shapley_sampled(f, x, background, options.n_permutations, rng::derive(seed, {1}), names);
  a.model_id = entry.id;
  a.target_date = target;
  return a;
}

}  // namespace macrocast
