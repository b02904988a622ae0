#pragma once

#include <span>

#include "macrocast/learners/tree.hpp"

namespace macrocast {

// Bootstrap forest of CART trees; prediction is the mean over trees.
// Reads n_trees, max_depth, min_leaf, feature_fraction, bootstrap and seed.
// loss selects the split criterion (SE or AE).
TrainedModel fit_random_forest(const Dataset& data, const ModelSpec& spec);

// Negative gradient of the loss at the current predictions.
Eigen::VectorXd pseudo_residuals(const LossKind& loss, const Eigen::VectorXd& y, const Eigen::VectorXd& pred);

// Forward stagewise boosting of Squared-criterion trees on pseudo-residuals.
// Base score: mean (SE) or median (AE, Huber). Leaf values are refit to the
// loss-optimal step: mean residual (SE), median residual (AE), one-step
// Huber estimate (Huber).
TrainedModel fit_gbdt(const Dataset& data, const ModelSpec& spec);

// Second-order boosting on squared error with g = pred - y and h = 1.
double xgb_leaf_weight(double g_sum, double h_sum, double lambda);
double xgb_split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma);
SplitChoice xgb_best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                           std::span<const int> rows, std::span<const int> features, double lambda, double gamma,
                           double min_child_weight);

enum class XgbBase { Tree, Linear };
TrainedModel fit_xgb(const Dataset& data, XgbBase base, const ModelSpec& spec);

}  // namespace macrocast
