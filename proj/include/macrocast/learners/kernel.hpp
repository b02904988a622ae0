#pragma once

#include "macrocast/learners/model.hpp"

namespace macrocast {

struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  int degree = 2;       // poly
  double coef0 = 1.0;   // poly
  double gamma = 0.1;   // rbf width; poly inner-product scale

  static KernelSpec linear() { return {KernelKind::Poly, 1, 0.0, 1.0}; }
  static KernelSpec poly(int degree, double coef0, double scale = 1.0) { return {KernelKind::Poly, degree, coef0, scale}; }
  static KernelSpec rbf(double gamma) { return {KernelKind::Rbf, 2, 0.0, gamma}; }
};

double kernel_value(const KernelSpec& k, const double* a, const double* b, Eigen::Index d);

// Dual ridge on centered rows and targets: alpha = (K + lambda I)^-1 (y - mean y),
// f(x) = mean y + sum_i alpha_i K(x_i - mean x, x - mean x).
// With `standardize`, columns are scaled to unit (population) variance before
// the kernel is applied.
TrainedModel fit_kernel_ridge(const Dataset& data, double lambda, const KernelSpec& kernel, bool standardize = false);

}  // namespace macrocast
