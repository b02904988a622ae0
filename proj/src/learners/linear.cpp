#include "macrocast/learners/linear.hpp"

#include <cmath>

#include "macrocast/error.hpp"

namespace macrocast {

namespace {

ModelSpec spec_for(Family f, double lambda = 0.0, double rho = 0.0) {
  ModelSpec s;
  s.family = f;
  s.hp.lambda = lambda;
  s.hp.rho = rho;
  return s;
}

FitDiagnostics basic_diag(const Dataset& data) {
  FitDiagnostics d;
  d.n = static_cast<int>(data.rows());
  d.d = static_cast<int>(data.cols());
  return d;
}

}  // namespace

TrainedModel fit_ols(const Dataset& data) {
  data.validate();
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n <= d) {
    throw NumericalError("OLS needs more rows than features (n=" + std::to_string(n) + ", d=" + std::to_string(d) +
                         "); use ridge");
  }
  Eigen::MatrixXd a(n, d + 1);
  a.col(0).setOnes();
  a.rightCols(d) = data.features;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < d + 1) {
    throw NumericalError("OLS design is rank-deficient (rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(d + 1) + "); use ridge");
  }
  const Eigen::VectorXd beta = qr.solve(data.targets);
  return TrainedModel(spec_for(Family::Ols), data.feature_names, LinearParams{beta.tail(d), beta(0)}, basic_diag(data));
}

TrainedModel fit_ridge(const Dataset& data, double lambda) {
  if (!(lambda >= 0)) throw ConfigError("ridge lambda must be >= 0");
  data.validate();
  const Eigen::RowVectorXd x_mean = data.features.colwise().mean();
  const double y_mean = data.targets.mean();
  const Eigen::MatrixXd xc = data.features.rowwise() - x_mean;
  const Eigen::VectorXd yc = data.targets.array() - y_mean;
  Eigen::VectorXd coef;
  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
    qr.setThreshold(1e-10);
    if (qr.rank() < xc.cols()) throw NumericalError("ridge with lambda=0 on a rank-deficient design");
    coef = qr.solve(yc);
  } else {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    coef = gram.ldlt().solve(xc.transpose() * yc);
  }
  const double intercept = y_mean - x_mean.dot(coef);
  return TrainedModel(spec_for(Family::Ridge, lambda, 1.0), data.feature_names, LinearParams{coef, intercept},
                      basic_diag(data));
}

TrainedModel fit_elasticnet(const Dataset& data, double lambda, double rho, int max_sweeps, double tolerance) {
  if (!(lambda >= 0)) throw ConfigError("elastic net lambda must be >= 0");
  if (!(rho >= 0 && rho <= 1)) throw ConfigError("elastic net rho must lie in [0, 1]");
  data.validate();
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  const Eigen::RowVectorXd x_mean = data.features.colwise().mean();
  const double y_mean = data.targets.mean();
  Eigen::MatrixXd z = data.features.rowwise() - x_mean;
  Eigen::VectorXd scale(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    scale(j) = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(n));
    if (scale(j) > 0) z.col(j) /= scale(j);
  }

  // Coordinates live on the standardized scale b_j = beta_j * s_j, so the
  // penalty weights are rescaled to keep the objective in original units.
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd resid = data.targets.array() - y_mean;
  Eigen::VectorXd l1(d), denom(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (scale(j) > 0) {
      l1(j) = 0.5 * lambda * (1.0 - rho) / scale(j);
      denom(j) = static_cast<double>(n) + lambda * rho / (scale(j) * scale(j));
    }
  }

  FitDiagnostics diag = basic_diag(data);
  double delta = 0.0;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    delta = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!(scale(j) > 0)) continue;
      const double old = b(j);
      const double rho_j = z.col(j).dot(resid) + static_cast<double>(n) * old;
      const double updated = soft_threshold(rho_j, l1(j)) / denom(j);
      if (updated != old) {
        resid -= (updated - old) * z.col(j);
        b(j) = updated;
        delta = std::max(delta, std::abs(updated - old));
      }
    }
    if (delta < tolerance) break;
  }
  diag.iterations = sweep + 1;
  diag.last_delta = delta;
  if (delta >= tolerance) {
    throw NumericalError("coordinate descent did not converge in " + std::to_string(max_sweeps) +
                         " sweeps (last max change " + std::to_string(delta) + ")");
  }

  Eigen::VectorXd coef(d);
  for (Eigen::Index j = 0; j < d; ++j) coef(j) = scale(j) > 0 ? b(j) / scale(j) : 0.0;
  const double intercept = y_mean - x_mean.dot(coef);
  const Family f = rho == 0.0 ? Family::Lasso : Family::ElasticNet;
  return TrainedModel(spec_for(f, lambda, rho), data.feature_names, LinearParams{coef, intercept}, diag);
}

double elasticnet_objective(const Dataset& data, const Eigen::VectorXd& coef, double intercept, double lambda,
                            double rho) {
  const Eigen::VectorXd r = (data.targets - data.features * coef).array() - intercept;
  return r.squaredNorm() + lambda * (rho * coef.squaredNorm() + (1.0 - rho) * coef.lpNorm<1>());
}

}  // namespace macrocast
