#include "macrocast/factors.hpp"

#include <algorithm>
#include <cmath>

#include "macrocast/error.hpp"

namespace macrocast {

FactorFit fit_factors(const Eigen::MatrixXd& x, const std::vector<std::string>& names, const RankRule& rule) {
  const Eigen::Index t = x.rows();
  const Eigen::Index n = x.cols();
  if (static_cast<Eigen::Index>(names.size()) != n) throw DataError("fit_factors: names do not match columns");
  if (n < 1) throw DataError("fit_factors: no variables");
  if (!x.allFinite()) throw DataError("fit_factors: window contains missing or non-finite cells");
  if (const auto* th = std::get_if<VarianceThreshold>(&rule)) {
    if (!(th->threshold > 0.0 && th->threshold <= 1.0)) {
      throw ConfigError("variance threshold must lie in (0, 1], got " + std::to_string(th->threshold));
    }
    if (th->max_rank < 1) throw ConfigError("max_rank must be >= 1");
  } else if (std::get<FixedRank>(rule).rank < 1 || std::get<FixedRank>(rule).rank > n) {
    throw ConfigError("factor rank must lie in [1, " + std::to_string(n) + "]");
  }
  if (t < 3) throw DataError("fit_factors: window needs at least 3 rows");

  FactorFit fit;
  fit.variables = names;
  fit.col_means = x.colwise().mean().transpose();
  Eigen::MatrixXd z = x.rowwise() - fit.col_means.transpose();
  fit.col_stds = (z.colwise().squaredNorm() / static_cast<double>(t - 1)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    const double scale = std::max(1.0, std::abs(fit.col_means(j)));
    if (!(fit.col_stds(j) > 1e-12 * scale)) throw DataError("fit_factors: variable '" + names[j] + "' is constant");
    z.col(j) /= fit.col_stds(j);
  }

  const Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(t - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("fit_factors: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double trace = cov.trace();

  int rank = 0;
  if (const auto* fixed = std::get_if<FixedRank>(&rule)) {
    rank = fixed->rank;
  } else {
    const auto& th = std::get<VarianceThreshold>(rule);
    const int cap = static_cast<int>(std::min<Eigen::Index>(th.max_rank, n));
    double cum = 0.0;
    rank = cap;
    for (int k = 0; k < cap; ++k) {
      cum += values(k) / trace;
      if (cum >= th.threshold - 1e-12) {
        rank = k + 1;
        break;
      }
    }
  }
  if (t < rank + 2) {
    throw DataError("fit_factors: window has " + std::to_string(t) + " rows, rank " + std::to_string(rank) +
                    " needs at least " + std::to_string(rank + 2));
  }

  fit.rank = rank;
  fit.loadings = vectors.leftCols(rank);
  for (int k = 0; k < rank; ++k) {
    Eigen::Index arg = 0;
    fit.loadings.col(k).cwiseAbs().maxCoeff(&arg);
    if (fit.loadings(arg, k) < 0) fit.loadings.col(k) *= -1.0;
  }
  fit.explained_variance_ratio = values.head(rank) / trace;
  fit.factors = z * fit.loadings;
  return fit;
}

FactorFit fit_factors(const Panel& window, const RankRule& rule) {
  const auto names = window.indicator_columns();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(window.index.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = window.values.col(window.column(names[j]));
  return fit_factors(x, names, rule);
}

Eigen::MatrixXd FactorFit::transform(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != static_cast<Eigen::Index>(variables.size())) {
    throw DataError("factor transform: expected " + std::to_string(variables.size()) + " columns, got " +
                    std::to_string(rows.cols()));
  }
  if (!rows.allFinite()) throw DataError("factor transform: rows contain missing cells");
  Eigen::MatrixXd z = (rows.rowwise() - col_means.transpose()).array().rowwise() / col_stds.transpose().array();
  return z * loadings;
}

Eigen::MatrixXd FactorFit::transform(const Eigen::MatrixXd& rows, const std::vector<std::string>& names) const {
  Eigen::MatrixXd ordered(rows.rows(), static_cast<Eigen::Index>(variables.size()));
  for (std::size_t k = 0; k < variables.size(); ++k) {
    auto it = std::find(names.begin(), names.end(), variables[k]);
    if (it == names.end()) throw DataError("factor transform: column '" + variables[k] + "' missing");
    ordered.col(static_cast<Eigen::Index>(k)) = rows.col(it - names.begin());
  }
  return transform(ordered);
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto r = static_cast<Eigen::Index>(j.size());
  const auto c = r > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

nlohmann::ordered_json FactorFit::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "macrocast.factor_fit";
  j["version"] = 1;
  j["rank"] = rank;
  j["variables"] = variables;
  j["col_means"] = std::vector<double>(col_means.data(), col_means.data() + col_means.size());
  j["col_stds"] = std::vector<double>(col_stds.data(), col_stds.data() + col_stds.size());
  j["explained_variance_ratio"] =
      std::vector<double>(explained_variance_ratio.data(), explained_variance_ratio.data() + explained_variance_ratio.size());
  j["loadings"] = matrix_json(loadings);
  j["factors"] = matrix_json(factors);
  return j;
}

FactorFit FactorFit::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "macrocast.factor_fit") throw DataError("not a factor fit document");
  FactorFit f;
  f.rank = j.at("rank").get<int>();
  f.variables = j.at("variables").get<std::vector<std::string>>();
  f.col_means = vector_from_json(j.at("col_means"));
  f.col_stds = vector_from_json(j.at("col_stds"));
  f.explained_variance_ratio = vector_from_json(j.at("explained_variance_ratio"));
  f.loadings = matrix_from_json(j.at("loadings"));
  f.factors = matrix_from_json(j.at("factors"));
  return f;
}

}  // namespace macrocast
