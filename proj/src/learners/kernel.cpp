#include "macrocast/learners/kernel.hpp"

#include <cmath>

#include "macrocast/error.hpp"

namespace macrocast {

double kernel_value(const KernelSpec& k, const double* a, const double* b, Eigen::Index d) {
  if (k.kind == KernelKind::Rbf) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double t = a[j] - b[j];
      s += t * t;
    }
    return std::exp(-k.gamma * s);
  }
  double dot = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) dot += a[j] * b[j];
  return std::pow(k.gamma * dot + k.coef0, k.degree);
}

TrainedModel fit_kernel_ridge(const Dataset& data, double lambda, const KernelSpec& kernel, bool standardize) {
  if (!(lambda > 0)) throw ConfigError("kernel ridge lambda must be > 0");
  data.validate();
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();

  KernelParams p;
  p.kernel = kernel.kind;
  p.degree = kernel.degree;
  p.coef0 = kernel.coef0;
  p.gamma = kernel.gamma;
  p.x_mean = data.features.colwise().mean().transpose();
  p.y_mean = data.targets.mean();
  p.x_scale = Eigen::VectorXd::Ones(d);
  p.support = data.features.rowwise() - p.x_mean.transpose();
  if (standardize) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double s = std::sqrt(p.support.col(j).squaredNorm() / static_cast<double>(n));
      if (s > 0) {
        p.x_scale(j) = s;
        p.support.col(j) /= s;
      }
    }
  }

  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = p.support;
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel_value(kernel, rows.data() + i * d, rows.data() + j * d, d);
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite kernel entry for rows " + std::to_string(i) + " and " + std::to_string(j));
      }
      gram(i, j) = gram(j, i) = v;
    }
  }
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd yc = data.targets.array() - p.y_mean;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  p.dual = ldlt.solve(yc);
  if (ldlt.info() != Eigen::Success || !p.dual.allFinite()) {
    // Large polynomial kernels can lose definiteness numerically.
    p.dual = gram.colPivHouseholderQr().solve(yc);
  }
  if (!p.dual.allFinite()) throw NumericalError("kernel ridge solve produced non-finite coefficients");

  ModelSpec spec;
  spec.family = Family::KernelRidge;
  spec.hp.lambda = lambda;
  spec.hp.kernel = kernel.kind;
  spec.hp.degree = kernel.degree;
  spec.hp.coef0 = kernel.coef0;
  spec.hp.gamma = kernel.gamma;
  spec.hp.standardize = standardize;
  FitDiagnostics diag;
  diag.n = static_cast<int>(n);
  diag.d = static_cast<int>(d);
  return TrainedModel(spec, data.feature_names, std::move(p), diag);
}

}  // namespace macrocast
