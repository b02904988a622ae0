#pragma once

#include "macrocast/learners/model.hpp"

namespace macrocast {

// Least squares with intercept. Throws NumericalError on a rank-deficient design.
TrainedModel fit_ols(const Dataset& data);

// Minimizes ||y - c - X b||^2 + lambda ||b||^2 with an unpenalized intercept.
TrainedModel fit_ridge(const Dataset& data, double lambda);

// Minimizes ||y - c - X b||^2 + lambda (rho ||b||_2^2 + (1 - rho) ||b||_1) by
// cyclic coordinate descent on internally standardized columns.
TrainedModel fit_elasticnet(const Dataset& data, double lambda, double rho, int max_sweeps = 10000,
                            double tolerance = 1e-8);
inline TrainedModel fit_lasso(const Dataset& data, double lambda, int max_sweeps = 10000, double tolerance = 1e-8) {
  return fit_elasticnet(data, lambda, 0.0, max_sweeps, tolerance);
}

// Objective above, evaluated for arbitrary coefficients.
double elasticnet_objective(const Dataset& data, const Eigen::VectorXd& coef, double intercept, double lambda,
                            double rho);

// sign(z) * max(|z| - t, 0)
inline double soft_threshold(double z, double t) { return z > t ? z - t : (z < -t ? z + t : 0.0); }

}  // namespace macrocast
