#include "macrocast/synth.hpp"

#include <algorithm>
#include <cmath>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"
#include "macrocast/rng.hpp"

namespace macrocast {

void SynthSpec::validate() const {
  if (n_vars < 1) throw ConfigError("synth: n_vars must be >= 1");
  if (quarters < 8) throw ConfigError("synth: quarters must be >= 8");
  if (rank < 1) throw ConfigError("synth: rank must be >= 1");
  if (noise < 0 || idio < 0) throw ConfigError("synth: noise scales must be >= 0");
  if (monthly_share < 0 || monthly_share > 1) throw ConfigError("synth: monthly_share must lie in [0, 1]");
  if (target_id.empty()) throw ConfigError("synth: target_id must not be empty");
}

nlohmann::ordered_json SynthSpec::to_json() const {
  nlohmann::ordered_json j;
  j["n_vars"] = n_vars;
  j["quarters"] = quarters;
  j["rank"] = rank;
  j["noise"] = noise;
  j["idio"] = idio;
  j["monthly_share"] = monthly_share;
  j["start"] = start.to_string();
  j["target_id"] = target_id;
  j["seed"] = seed;
  return j;
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth spec must be a JSON object");
  SynthSpec s;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "n_vars") s.n_vars = v.get<int>();
      else if (k == "quarters") s.quarters = v.get<int>();
      else if (k == "rank") s.rank = v.get<int>();
      else if (k == "noise") s.noise = v.get<double>();
      else if (k == "idio") s.idio = v.get<double>();
      else if (k == "monthly_share") s.monthly_share = v.get<double>();
      else if (k == "start") s.start = QuarterDate::parse(v.get<std::string>());
      else if (k == "target_id") s.target_id = v.get<std::string>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else throw ConfigError("synth: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  s.validate();
  return s;
}

SynthPanel generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  SynthPanel p;
  p.spec = spec;
  const int t_n = spec.quarters;
  const int r = spec.rank;
  const int n = spec.n_vars;
  rng::Stream g(rng::derive(spec.seed, {rng::hash_string("synth")}));

  p.factor_ar.resize(r);
  p.target_loadings.resize(r);
  for (int k = 0; k < r; ++k) {
    p.factor_ar(k) = k % 2 == 0 ? 0.8 : 0.5;
    p.target_loadings(k) = (k % 2 == 0 ? 1.5 : -1.0) / (1 + k / 2);
  }
  p.intercept = 4.0;
  p.target_ar = 0.4;

  p.loadings.resize(n, r);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < r; ++k) p.loadings(i, k) = g.normal();
  }
  p.means.resize(n);
  for (int i = 0; i < n; ++i) p.means(i) = 5.0 + 3.0 * g.normal();

  const int burn = 50;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(r);
  double y_prev = p.intercept / (1.0 - p.target_ar);
  Eigen::VectorXd f_prev = f;
  p.factors.resize(t_n, r);
  p.y.resize(t_n);
  for (int t = -burn; t < t_n; ++t) {
    f_prev = f;
    for (int k = 0; k < r; ++k) f(k) = p.factor_ar(k) * f(k) + g.normal();
    const double y = p.intercept + p.target_ar * y_prev + p.target_loadings.dot(f_prev) + spec.noise * g.normal();
    if (t >= 0) {
      p.factors.row(t) = f.transpose();
      p.y(t) = y;
    }
    y_prev = y;
  }

  p.x.resize(t_n, n);
  for (int t = 0; t < t_n; ++t) {
    for (int i = 0; i < n; ++i) {
      p.x(t, i) = p.means(i) + p.loadings.row(i).dot(p.factors.row(t)) + spec.idio * g.normal();
    }
  }

  const int n_monthly = static_cast<int>(std::floor(spec.monthly_share * n + 1e-9));
  p.monthly.assign(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    p.names.push_back("X" + std::string(i + 1 < 10 ? "0" : "") + std::to_string(i + 1));
    // Spread monthly series across the panel rather than clustering them.
    if (n_monthly > 0 && i % std::max(1, n / n_monthly) == 0 &&
        std::count(p.monthly.begin(), p.monthly.end(), true) < n_monthly) {
      p.monthly[static_cast<std::size_t>(i)] = true;
    }
  }
  p.monthly_x = Eigen::MatrixXd::Zero(3 * t_n, n);
  for (int i = 0; i < n; ++i) {
    if (!p.monthly[static_cast<std::size_t>(i)]) continue;
    for (int t = 0; t < t_n; ++t) {
      const double a = 0.3 * g.normal();
      const double b = 0.3 * g.normal();
      p.monthly_x(3 * t, i) = p.x(t, i) + a;
      p.monthly_x(3 * t + 1, i) = p.x(t, i) + b;
      p.monthly_x(3 * t + 2, i) = 3.0 * p.x(t, i) - p.monthly_x(3 * t, i) - p.monthly_x(3 * t + 1, i);
    }
  }
  for (int t = 0; t < t_n; ++t) p.index.push_back(spec.start.plus(t));
  return p;
}

std::string SynthPanel::to_csv() const {
  std::string out = "date,variable,value,frequency,kind\n";
  for (std::size_t t = 0; t < index.size(); ++t) {
    out += index[t].to_string() + ',' + io::csv_escape(spec.target_id) + ',' + io::format_real(y(static_cast<Eigen::Index>(t))) +
           ",quarterly,yoy_percent\n";
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    if (monthly[i]) {
      for (std::size_t t = 0; t < index.size(); ++t) {
        for (int m = 0; m < 3; ++m) {
          const MonthDate md{index[t].year, (index[t].quarter - 1) * 3 + m + 1};
          out += md.to_string() + ',' + names[i] + ',' +
                 io::format_real(monthly_x(static_cast<Eigen::Index>(3 * t) + m, c)) + ",monthly,yoy_percent\n";
        }
      }
    } else {
      for (std::size_t t = 0; t < index.size(); ++t) {
        out += index[t].to_string() + ',' + names[i] + ',' + io::format_real(x(static_cast<Eigen::Index>(t), c)) +
               ",quarterly,yoy_percent\n";
      }
    }
  }
  return out;
}

nlohmann::ordered_json SynthPanel::truth() const {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json j;
  j["spec"] = spec.to_json();
  j["target"] = {{"intercept", intercept}, {"own_lag", target_ar}, {"factor_lag1", vec(target_loadings)}};
  j["factor_ar"] = vec(factor_ar);
  nlohmann::ordered_json vars = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    vars.push_back({{"name", names[i]},
                    {"frequency", monthly[i] ? "monthly" : "quarterly"},
                    {"mean", means(r)},
                    {"loadings", vec(loadings.row(r).transpose())}});
  }
  j["indicators"] = std::move(vars);
  nlohmann::ordered_json fac = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < index.size(); ++t) {
    fac.push_back({{"date", index[t].to_string()}, {"factors", vec(factors.row(static_cast<Eigen::Index>(t)).transpose())}});
  }
  j["factors"] = std::move(fac);
  return j;
}

}  // namespace macrocast
