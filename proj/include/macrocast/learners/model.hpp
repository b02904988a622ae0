#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "macrocast/learners/dataset.hpp"

namespace macrocast {

enum class Family { Ar, Ols, Ridge, Lasso, ElasticNet, KernelRidge, RandomForest, Gbdt, XgbTree, XgbLinear };
std::string_view to_string(Family f);
Family parse_family(std::string_view s);

enum class KernelKind { Poly, Rbf };

// Hyperparameters for every family; each family reads the subset it needs.
struct Hyperparams {
  // Linear and kernel penalties.
  double lambda = 1.0;
  double rho = 0.5;  // elastic net: share of the penalty on ||b||^2
  // Kernel ridge.
  KernelKind kernel = KernelKind::Rbf;
  int degree = 2;
  double coef0 = 1.0;
  double gamma = 0.1;  // rbf width, or inner-product scale for poly
  bool standardize = true;  // kernel on columns scaled to unit variance
  // Trees and boosting.
  int n_trees = 100;  // trees in a forest, boosting rounds otherwise
  int max_depth = 3;
  int min_leaf = 1;
  double learning_rate = 0.1;
  double subsample = 1.0;
  double feature_fraction = 1.0;
  bool bootstrap = true;
  double gamma_complexity = 0.0;  // second-order boosting: per-leaf penalty
  double lambda_leaf = 1.0;       // second-order boosting: L2 on leaf weights
  double min_child_weight = 1.0;
  // Coordinate descent.
  int max_sweeps = 10000;
  double tolerance = 1e-8;

  nlohmann::ordered_json to_json() const;
};

// Parameter names accepted by set_hyperparam / grids / config files.
const std::vector<std::string>& hyperparam_names();
void set_hyperparam(Hyperparams& hp, LossKind& loss, std::string_view name, const nlohmann::json& value);

struct ModelSpec {
  Family family = Family::Ols;
  LossKind loss = LossKind::squared();
  Hyperparams hp;
  std::uint64_t seed = 0;

  // Throws ConfigError when a hyperparameter the family reads is out of range.
  void validate() const;
  // Compact description of the family-relevant hyperparameters.
  std::string label() const;
  nlohmann::ordered_json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

// Binary regression tree. Rows with x[feature] <= threshold go left.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output
  int n_samples = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const double* x) const { return nodes[static_cast<std::size_t>(leaf_index(x))].value; }
  int leaf_index(const double* x) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(k)];
      k = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return k;
  }
  int leaf_count() const;
  int depth() const;
};

struct LinearParams {
  Eigen::VectorXd coef;
  double intercept = 0.0;
};

struct KernelParams {
  KernelKind kernel = KernelKind::Rbf;
  int degree = 2;
  double coef0 = 1.0;
  double gamma = 0.1;
  Eigen::MatrixXd support;  // centered training rows
  Eigen::VectorXd dual;
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_scale;  // support rows are (x - x_mean) / x_scale
  double y_mean = 0.0;
};

// prediction = base_score + tree_scale * sum_t tree_t(x)
struct TreeEnsembleParams {
  std::vector<Tree> trees;
  double base_score = 0.0;
  double tree_scale = 1.0;
};

using ModelParams = std::variant<LinearParams, KernelParams, TreeEnsembleParams>;

struct FitDiagnostics {
  int n = 0;
  int d = 0;
  int iterations = 0;        // sweeps or boosting rounds actually run
  double last_delta = 0.0;   // coordinate descent
  std::vector<double> stage_loss;  // training loss after each boosting stage
};

// Immutable fitted predictor.
class TrainedModel {
 public:
  TrainedModel(ModelSpec spec, std::vector<std::string> feature_names, ModelParams params, FitDiagnostics diag);

  double predict(std::span<const double> x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  const ModelSpec& spec() const { return spec_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const ModelParams& params() const { return params_; }
  const FitDiagnostics& diagnostics() const { return diag_; }

  // Versioned JSON form: spec, feature names and parameters (trees as node lists).
  nlohmann::ordered_json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  // SHA-256 of the compact JSON dump.
  std::string hash() const;

 private:
  ModelSpec spec_;
  std::vector<std::string> feature_names_;
  ModelParams params_;
  FitDiagnostics diag_;
};

// Dispatches on spec.family.
TrainedModel fit_model(const ModelSpec& spec, const Dataset& data);

}  // namespace macrocast
