#include "macrocast/roster.hpp"

#include <algorithm>

#include "macrocast/error.hpp"
#include "macrocast/learners/cv.hpp"

namespace macrocast {

std::string_view to_string(ModelGroup g) {
  switch (g) {
    case ModelGroup::G1: return "G1";
    case ModelGroup::G2: return "G2";
    case ModelGroup::G3: return "G3";
  }
  return "G1";
}

const std::vector<std::string>& single_model_names() {
  static const std::vector<std::string> names = {
      "AR",          "FM-AR-SE",    "XGB-GBTREE", "XGB-GBLINEAR", "GBDT-AE",        "GBDT-HUBER",  "GBDT-SE",
      "RF-AE",       "RF-SE",       "FM-XGB-GBLINEAR", "FM-XGB-GBTREE", "FM-GBDT-AE", "FM-GBDT-HUBER", "FM-GBDT-SE",
      "FM-RF-AE",    "FM-RF-SE",    "FM-KRR-POLY", "FM-KRR-RBF", "FM-LASSO"};
  return names;
}

std::optional<ModelGroup> group_of(std::string_view name) {
  const auto& all = single_model_names();
  const auto it = std::find(all.begin(), all.end(), name);
  if (it == all.end()) return std::nullopt;
  const auto i = it - all.begin();
  if (i < 2) return ModelGroup::G1;
  if (i < 9) return ModelGroup::G2;
  return ModelGroup::G3;
}

std::vector<std::string> group_members(ModelGroup g) {
  std::vector<std::string> out;
  for (const auto& n : single_model_names()) {
    if (group_of(n) == g) out.push_back(n);
  }
  return out;
}

namespace {

using Grid = std::map<std::string, std::vector<nlohmann::json>>;

ModelSpec base_spec(Family f, LossKind loss = LossKind::squared()) {
  ModelSpec s;
  s.family = f;
  s.loss = loss;
  return s;
}

std::optional<LossKind> loss_suffix(std::string_view name, std::string_view stem) {
  if (name.substr(0, stem.size()) != stem || name.size() == stem.size() || name[stem.size()] != '-') return std::nullopt;
  try {
    return LossKind::parse(name.substr(stem.size() + 1));
  } catch (const ConfigError&) {
    return std::nullopt;
  }
}

// Specs for a base (non-FM) name; empty when the name is unknown.
std::vector<ModelSpec> base_grid(std::string_view name, bool factor_mode, const RosterDefaults& d) {
  if (name == "AR" || (factor_mode && name == "AR-SE") || name == "OLS") return {base_spec(Family::Ols)};
  if (name == "RIDGE") return expand_grid(base_spec(Family::Ridge), Grid{{"lambda", {0.01, 0.1, 1.0, 10.0, 100.0, 1000.0}}});
  if (name == "LASSO") {
    return expand_grid(base_spec(Family::Lasso), Grid{{"lambda", {0.01, 0.1, 1.0, 10.0, 100.0}}});
  }
  if (name == "ELASTICNET") {
    return expand_grid(base_spec(Family::ElasticNet),
                       Grid{{"lambda", {0.01, 0.1, 1.0, 10.0, 100.0}}, {"rho", {0.2, 0.5, 0.8}}});
  }
  if (name == "KRR-POLY") {
    ModelSpec s = base_spec(Family::KernelRidge);
    s.hp.kernel = KernelKind::Poly;
    s.hp.degree = 2;
    s.hp.coef0 = 1.0;
    s.hp.gamma = 0.1;
    return expand_grid(s, Grid{{"lambda", {0.1, 1.0, 10.0, 100.0}}});
  }
  if (name == "KRR-RBF") {
    ModelSpec s = base_spec(Family::KernelRidge);
    s.hp.kernel = KernelKind::Rbf;
    return expand_grid(s, Grid{{"gamma", {0.01, 0.05, 0.2}}, {"lambda", {0.1, 1.0, 10.0}}});
  }
  if (name == "XGB-GBTREE") {
    ModelSpec s = base_spec(Family::XgbTree);
    s.hp.n_trees = d.boost_rounds;
    s.hp.max_depth = d.boost_depth;
    s.hp.learning_rate = d.boost_learning_rate;
    return {s};
  }
  if (name == "XGB-GBLINEAR") {
    ModelSpec s = base_spec(Family::XgbLinear);
    s.hp.n_trees = d.linear_boost_rounds;
    s.hp.learning_rate = d.linear_boost_learning_rate;
    return expand_grid(s, Grid{{"lambda_leaf", {1.0, 10.0, 100.0}}});
  }
  if (auto loss = loss_suffix(name, "GBDT")) {
    ModelSpec s = base_spec(Family::Gbdt, *loss);
    s.hp.n_trees = d.boost_rounds;
    s.hp.max_depth = d.boost_depth;
    s.hp.learning_rate = d.boost_learning_rate;
    return {s};
  }
  if (auto loss = loss_suffix(name, "RF"); loss && loss->kind != LossKind::Kind::Huber) {
    ModelSpec s = base_spec(Family::RandomForest, *loss);
    s.hp.n_trees = d.forest_trees;
    s.hp.max_depth = d.forest_depth;
    s.hp.min_leaf = d.forest_min_leaf;
    s.hp.feature_fraction = d.forest_feature_fraction;
    s.hp.bootstrap = true;
    return {s};
  }
  return {};
}

}  // namespace

ModelEntry roster_entry(const std::string& name, const FeatureSpec& base, const RosterDefaults& d) {
  const bool fm = name.rfind("FM-", 0) == 0;
  const std::string_view stem = fm ? std::string_view(name).substr(3) : std::string_view(name);
  ModelEntry e;
  e.id = name;
  e.grid = base_grid(stem, fm, d);
  if (e.grid.empty()) throw ConfigError("unknown model name '" + name + "'");
  e.features = base;
  if (fm) e.features.mode = FeatureMode::FactorAugmented;
  else if (stem == "AR") e.features.mode = FeatureMode::TargetOnly;
  else e.features.mode = FeatureMode::RawIndicators;
  return e;
}

bool is_single_model_name(std::string_view name) {
  try {
    roster_entry(std::string(name));
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

}  // namespace macrocast
