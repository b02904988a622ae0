#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>

#include "macrocast/learners/model.hpp"

namespace macrocast {

enum class SplitCriterion { Squared, Absolute };

struct SplitChoice {
  int feature = -1;  // -1: no admissible split
  double threshold = 0.0;
  double gain = -std::numeric_limits<double>::infinity();
  int n_left = 0;
};

// Best axis-aligned split of `rows` among `features` (scanned in the given
// order, thresholds ascending; the first strictly best candidate wins).
// Squared: gain = SSE(parent) - SSE(left) - SSE(right).
// Absolute: gain = SAD(parent) - SAD(left) - SAD(right) around medians.
// Thresholds sit at midpoints of consecutive distinct values.
SplitChoice cart_best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const int> rows,
                            std::span<const int> features, SplitCriterion criterion, int min_leaf);

// Chooses candidate features for the node identified by `node_key`.
using FeatureSampler = std::function<std::vector<int>(std::uint64_t node_key)>;

struct TreeGrowOptions {
  SplitCriterion criterion = SplitCriterion::Squared;
  int max_depth = 3;
  int min_leaf = 1;
};

// Greedy CART growth over `rows` (duplicates allowed, e.g. a bootstrap
// sample). Leaves hold the mean (Squared) or median (Absolute).
Tree grow_cart(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int> rows,
               const TreeGrowOptions& opt, const FeatureSampler& sampler = {});

// Name-keyed feature subset: the ceil(fraction * d) features with the smallest
// hash(seed, node, name), returned in name order so that equal-gain splits are
// resolved by name. Reordering columns does not change the fitted trees.
FeatureSampler name_keyed_sampler(std::uint64_t seed, const std::vector<std::string>& names, double fraction);

TrainedModel fit_tree(const Dataset& data, const LossKind& criterion, int max_depth, int min_leaf);

double median_of(std::vector<double> v);

}  // namespace macrocast
