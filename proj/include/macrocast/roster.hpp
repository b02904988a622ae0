#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "macrocast/pipeline.hpp"

namespace macrocast {

// Model groups: econometric (G1), machine learning (G2), combined
// factor + learner (G3).
enum class ModelGroup { G1, G2, G3 };
std::string_view to_string(ModelGroup g);

// Size knobs shared by the tree-based roster entries.
struct RosterDefaults {
  int forest_trees = 100;
  int forest_depth = 6;
  int forest_min_leaf = 2;
  double forest_feature_fraction = 1.0 / 3.0;
  int boost_rounds = 100;
  int boost_depth = 3;
  double boost_learning_rate = 0.1;
  int linear_boost_rounds = 100;
  double linear_boost_learning_rate = 0.3;
};

// The 19 single models in table order.
const std::vector<std::string>& single_model_names();
std::vector<std::string> group_members(ModelGroup g);
std::optional<ModelGroup> group_of(std::string_view name);

// Builds the backtest entry for a roster name. Besides the 19 table names,
// OLS, RIDGE, LASSO, ELASTICNET, KRR-POLY, KRR-RBF and any of them with an
// FM- prefix are accepted. Hyperparameter grids with more than one spec are
// cross-validated inside every training window.
ModelEntry roster_entry(const std::string& name, const FeatureSpec& base = {}, const RosterDefaults& d = {});
bool is_single_model_name(std::string_view name);

}  // namespace macrocast
