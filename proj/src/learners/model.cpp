#include "macrocast/learners/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"
#include "macrocast/learners/boosting.hpp"
#include "macrocast/learners/kernel.hpp"
#include "macrocast/learners/linear.hpp"

namespace macrocast {

namespace {

struct FamilyName {
  Family family;
  std::string_view name;
};
constexpr FamilyName kFamilies[] = {
    {Family::Ar, "ar"},
    {Family::Ols, "ols"},
    {Family::Ridge, "ridge"},
    {Family::Lasso, "lasso"},
    {Family::ElasticNet, "elasticnet"},
    {Family::KernelRidge, "kernel_ridge"},
    {Family::RandomForest, "random_forest"},
    {Family::Gbdt, "gbdt"},
    {Family::XgbTree, "xgb_tree"},
    {Family::XgbLinear, "xgb_linear"},
};

double as_real(std::string_view name, const nlohmann::json& v) {
  if (!v.is_number()) throw ConfigError("hyperparameter '" + std::string(name) + "' must be a number");
  return v.get<double>();
}

int as_int(std::string_view name, const nlohmann::json& v) {
  const double d = as_real(name, v);
  if (d != std::floor(d)) throw ConfigError("hyperparameter '" + std::string(name) + "' must be an integer");
  return static_cast<int>(d);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

std::string_view to_string(Family f) {
  for (const auto& e : kFamilies) {
    if (e.family == f) return e.name;
  }
  return "ols";
}

Family parse_family(std::string_view s) {
  for (const auto& e : kFamilies) {
    if (e.name == s) return e.family;
  }
  throw ConfigError("unknown model family '" + std::string(s) + "'");
}

const std::vector<std::string>& hyperparam_names() {
  static const std::vector<std::string> names = {
      "lambda",      "rho",         "kernel",   "degree",        "coef0",          "gamma",
      "n_trees",     "max_depth",   "min_leaf", "learning_rate", "subsample",      "feature_fraction",
      "bootstrap",   "gamma_complexity", "lambda_leaf", "min_child_weight", "max_sweeps", "tolerance",
      "standardize", "loss",      "huber_delta"};
  return names;
}

void set_hyperparam(Hyperparams& hp, LossKind& loss, std::string_view name, const nlohmann::json& v) {
  if (name == "lambda") hp.lambda = as_real(name, v);
  else if (name == "rho") hp.rho = as_real(name, v);
  else if (name == "kernel") {
    if (!v.is_string()) throw ConfigError("hyperparameter 'kernel' must be \"poly\" or \"rbf\"");
    const auto k = v.get<std::string>();
    if (k == "poly") hp.kernel = KernelKind::Poly;
    else if (k == "rbf") hp.kernel = KernelKind::Rbf;
    else throw ConfigError("hyperparameter 'kernel' must be \"poly\" or \"rbf\"");
  } else if (name == "degree") hp.degree = as_int(name, v);
  else if (name == "coef0") hp.coef0 = as_real(name, v);
  else if (name == "gamma") hp.gamma = as_real(name, v);
  else if (name == "n_trees") hp.n_trees = as_int(name, v);
  else if (name == "max_depth") hp.max_depth = as_int(name, v);
  else if (name == "min_leaf") hp.min_leaf = as_int(name, v);
  else if (name == "learning_rate") hp.learning_rate = as_real(name, v);
  else if (name == "subsample") hp.subsample = as_real(name, v);
  else if (name == "feature_fraction") hp.feature_fraction = as_real(name, v);
  else if (name == "bootstrap") {
    if (!v.is_boolean()) throw ConfigError("hyperparameter 'bootstrap' must be a boolean");
    hp.bootstrap = v.get<bool>();
  } else if (name == "standardize") {
    if (!v.is_boolean()) throw ConfigError("hyperparameter 'standardize' must be a boolean");
    hp.standardize = v.get<bool>();
  } else if (name == "gamma_complexity") hp.gamma_complexity = as_real(name, v);
  else if (name == "lambda_leaf") hp.lambda_leaf = as_real(name, v);
  else if (name == "min_child_weight") hp.min_child_weight = as_real(name, v);
  else if (name == "max_sweeps") hp.max_sweeps = as_int(name, v);
  else if (name == "tolerance") hp.tolerance = as_real(name, v);
  else if (name == "loss") {
    if (!v.is_string()) throw ConfigError("hyperparameter 'loss' must be a string");
    const double delta = loss.delta;
    loss = LossKind::parse(v.get<std::string>());
    loss.delta = delta;
  } else if (name == "huber_delta") loss.delta = as_real(name, v);
  else throw ConfigError("unknown hyperparameter '" + std::string(name) + "'");
}

nlohmann::ordered_json Hyperparams::to_json() const {
  nlohmann::ordered_json j;
  j["lambda"] = lambda;
  j["rho"] = rho;
  j["kernel"] = kernel == KernelKind::Poly ? "poly" : "rbf";
  j["degree"] = degree;
  j["coef0"] = coef0;
  j["gamma"] = gamma;
  j["standardize"] = standardize;
  j["n_trees"] = n_trees;
  j["max_depth"] = max_depth;
  j["min_leaf"] = min_leaf;
  j["learning_rate"] = learning_rate;
  j["subsample"] = subsample;
  j["feature_fraction"] = feature_fraction;
  j["bootstrap"] = bootstrap;
  j["gamma_complexity"] = gamma_complexity;
  j["lambda_leaf"] = lambda_leaf;
  j["min_child_weight"] = min_child_weight;
  j["max_sweeps"] = max_sweeps;
  j["tolerance"] = tolerance;
  return j;
}

void ModelSpec::validate() const {
  const auto& h = hp;
  if (loss.kind == LossKind::Kind::Huber) require(loss.delta > 0, "huber_delta must be > 0");
  switch (family) {
    case Family::Ar:
    case Family::Ols: break;
    case Family::Ridge: require(h.lambda >= 0, "lambda must be >= 0"); break;
    case Family::Lasso:
    case Family::ElasticNet:
      require(h.lambda >= 0, "lambda must be >= 0");
      require(h.rho >= 0 && h.rho <= 1, "rho must lie in [0, 1]");
      require(h.max_sweeps >= 1, "max_sweeps must be >= 1");
      require(h.tolerance > 0, "tolerance must be > 0");
      break;
    case Family::KernelRidge:
      require(h.lambda > 0, "kernel ridge lambda must be > 0");
      require(h.kernel == KernelKind::Rbf ? h.gamma >= 0 : h.degree >= 1, "kernel parameters out of range");
      break;
    case Family::RandomForest:
      require(h.n_trees >= 1, "n_trees must be >= 1");
      require(h.max_depth >= 1, "max_depth must be >= 1");
      require(h.min_leaf >= 1, "min_leaf must be >= 1");
      require(h.feature_fraction > 0 && h.feature_fraction <= 1, "feature_fraction must lie in (0, 1]");
      require(loss.kind != LossKind::Kind::Huber, "random forest criterion must be SE or AE");
      break;
    case Family::Gbdt:
    case Family::XgbTree:
    case Family::XgbLinear:
      require(h.n_trees >= 0, "n_trees must be >= 0");
      require(h.learning_rate > 0 && h.learning_rate <= 1, "learning_rate must lie in (0, 1]");
      require(h.max_depth >= 1, "max_depth must be >= 1");
      require(h.min_leaf >= 1, "min_leaf must be >= 1");
      require(h.subsample > 0 && h.subsample <= 1, "subsample must lie in (0, 1]");
      require(h.feature_fraction > 0 && h.feature_fraction <= 1, "feature_fraction must lie in (0, 1]");
      require(h.gamma_complexity >= 0, "gamma_complexity must be >= 0");
      require(h.lambda_leaf >= 0, "lambda_leaf must be >= 0");
      require(h.min_child_weight >= 0, "min_child_weight must be >= 0");
      break;
  }
}

std::string ModelSpec::label() const {
  std::ostringstream s;
  s << to_string(family);
  const auto& h = hp;
  switch (family) {
    case Family::Ar:
    case Family::Ols: break;
    case Family::Ridge:
    case Family::Lasso: s << " lambda=" << h.lambda; break;
    case Family::ElasticNet: s << " lambda=" << h.lambda << " rho=" << h.rho; break;
    case Family::KernelRidge:
      s << " lambda=" << h.lambda << (h.kernel == KernelKind::Rbf ? " rbf gamma=" : " poly gamma=") << h.gamma;
      if (h.kernel == KernelKind::Poly) s << " degree=" << h.degree << " coef0=" << h.coef0;
      break;
    case Family::RandomForest:
      s << " " << loss.name() << " n_trees=" << h.n_trees << " max_depth=" << h.max_depth << " min_leaf=" << h.min_leaf
        << " feature_fraction=" << h.feature_fraction;
      break;
    case Family::Gbdt:
      s << " " << loss.name() << " n_trees=" << h.n_trees << " max_depth=" << h.max_depth
        << " learning_rate=" << h.learning_rate;
      break;
    case Family::XgbTree:
      s << " n_trees=" << h.n_trees << " max_depth=" << h.max_depth << " learning_rate=" << h.learning_rate
        << " lambda_leaf=" << h.lambda_leaf << " gamma_complexity=" << h.gamma_complexity;
      break;
    case Family::XgbLinear:
      s << " n_trees=" << h.n_trees << " learning_rate=" << h.learning_rate << " lambda_leaf=" << h.lambda_leaf;
      break;
  }
  return s.str();
}

nlohmann::ordered_json ModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["family"] = std::string(to_string(family));
  j["loss"] = loss.name();
  j["huber_delta"] = loss.delta;
  j["hyperparams"] = hp.to_json();
  j["seed"] = seed;
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.loss = LossKind::parse(j.at("loss").get<std::string>());
  s.loss.delta = j.at("huber_delta").get<double>();
  for (const auto& [k, v] : j.at("hyperparams").items()) set_hyperparam(s.hp, s.loss, k, v);
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

// --- Tree -----------------------------------------------------------------

int Tree::leaf_count() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

int Tree::depth() const {
  std::vector<int> depth(nodes.size(), 0);
  int best = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].feature >= 0) {
      depth[static_cast<std::size_t>(nodes[k].left)] = depth[k] + 1;
      depth[static_cast<std::size_t>(nodes[k].right)] = depth[k] + 1;
      best = std::max(best, depth[k] + 1);
    }
  }
  return best;
}

// --- TrainedModel ---------------------------------------------------------

TrainedModel::TrainedModel(ModelSpec spec, std::vector<std::string> feature_names, ModelParams params,
                           FitDiagnostics diag)
    : spec_(std::move(spec)), feature_names_(std::move(feature_names)), params_(std::move(params)), diag_(std::move(diag)) {}

double TrainedModel::predict(std::span<const double> x) const {
  if (x.size() != feature_names_.size()) {
    throw DataError("predict: expected " + std::to_string(feature_names_.size()) + " features, got " +
                    std::to_string(x.size()));
  }
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LinearParams>) {
          double s = p.intercept;
          for (std::size_t j = 0; j < x.size(); ++j) s += p.coef(static_cast<Eigen::Index>(j)) * x[j];
          return s;
        } else if constexpr (std::is_same_v<T, KernelParams>) {
          const Eigen::Index d = p.x_mean.size();
          Eigen::VectorXd xc(d);
          for (Eigen::Index j = 0; j < d; ++j) xc(j) = (x[static_cast<std::size_t>(j)] - p.x_mean(j)) / p.x_scale(j);
          const KernelSpec ks{p.kernel, p.degree, p.coef0, p.gamma};
          double s = p.y_mean;
          Eigen::VectorXd row(d);
          for (Eigen::Index i = 0; i < p.support.rows(); ++i) {
            row = p.support.row(i).transpose();
            s += p.dual(i) * kernel_value(ks, row.data(), xc.data(), d);
          }
          return s;
        } else {
          double s = 0.0;
          for (const auto& t : p.trees) s += t.predict(x.data());
          return p.base_score + p.tree_scale * s;
        }
      },
      params_);
}

Eigen::VectorXd TrainedModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != static_cast<Eigen::Index>(feature_names_.size())) {
    throw DataError("predict: expected " + std::to_string(feature_names_.size()) + " features, got " +
                    std::to_string(x.cols()));
  }
  Eigen::VectorXd out(x.rows());
  if (const auto* lin = std::get_if<LinearParams>(&params_)) {
    out = (x * lin->coef).array() + lin->intercept;
    return out;
  }
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out(i) = predict(std::span<const double>(rows.data() + i * x.cols(), static_cast<std::size_t>(x.cols())));
  }
  return out;
}

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::ordered_json TrainedModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "macrocast.model";
  j["version"] = 1;
  j["spec"] = spec_.to_json();
  j["feature_names"] = feature_names_;
  nlohmann::ordered_json p;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearParams>) {
          p["kind"] = "linear";
          p["intercept"] = m.intercept;
          p["coef"] = to_vec(m.coef);
        } else if constexpr (std::is_same_v<T, KernelParams>) {
          p["kind"] = "kernel";
          p["kernel"] = m.kernel == KernelKind::Poly ? "poly" : "rbf";
          p["degree"] = m.degree;
          p["coef0"] = m.coef0;
          p["gamma"] = m.gamma;
          p["x_mean"] = to_vec(m.x_mean);
          p["x_scale"] = to_vec(m.x_scale);
          p["y_mean"] = m.y_mean;
          p["dual"] = to_vec(m.dual);
          nlohmann::ordered_json rows = nlohmann::ordered_json::array();
          for (Eigen::Index i = 0; i < m.support.rows(); ++i) rows.push_back(to_vec(m.support.row(i).transpose()));
          p["support"] = std::move(rows);
        } else {
          p["kind"] = "trees";
          p["base_score"] = m.base_score;
          p["tree_scale"] = m.tree_scale;
          nlohmann::ordered_json trees = nlohmann::ordered_json::array();
          for (const auto& t : m.trees) {
            nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
            for (const auto& n : t.nodes) {
              nlohmann::ordered_json jn;
              if (n.feature >= 0) {
                jn["feature"] = n.feature;
                jn["threshold"] = n.threshold;
                jn["left"] = n.left;
                jn["right"] = n.right;
              } else {
                jn["value"] = n.value;
              }
              jn["n"] = n.n_samples;
              nodes.push_back(std::move(jn));
            }
            trees.push_back(std::move(nodes));
          }
          p["trees"] = std::move(trees);
        }
      },
      params_);
  j["params"] = std::move(p);
  j["diagnostics"] = {{"n", diag_.n}, {"d", diag_.d}, {"iterations", diag_.iterations}, {"last_delta", diag_.last_delta}};
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "macrocast.model") throw DataError("not a model document");
  if (j.value("version", 0) != 1) throw DataError("unsupported model version");
  ModelSpec spec = ModelSpec::from_json(j.at("spec"));
  auto names = j.at("feature_names").get<std::vector<std::string>>();
  const auto& p = j.at("params");
  const auto kind = p.at("kind").get<std::string>();
  ModelParams params;
  if (kind == "linear") {
    params = LinearParams{from_vec(p.at("coef").get<std::vector<double>>()), p.at("intercept").get<double>()};
  } else if (kind == "kernel") {
    KernelParams k;
    k.kernel = p.at("kernel").get<std::string>() == "poly" ? KernelKind::Poly : KernelKind::Rbf;
    k.degree = p.at("degree").get<int>();
    k.coef0 = p.at("coef0").get<double>();
    k.gamma = p.at("gamma").get<double>();
    k.x_mean = from_vec(p.at("x_mean").get<std::vector<double>>());
    k.x_scale = from_vec(p.at("x_scale").get<std::vector<double>>());
    k.y_mean = p.at("y_mean").get<double>();
    k.dual = from_vec(p.at("dual").get<std::vector<double>>());
    const auto& rows = p.at("support");
    k.support.resize(static_cast<Eigen::Index>(rows.size()), k.x_mean.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      k.support.row(static_cast<Eigen::Index>(i)) = from_vec(rows[i].get<std::vector<double>>()).transpose();
    }
    params = std::move(k);
  } else if (kind == "trees") {
    TreeEnsembleParams t;
    t.base_score = p.at("base_score").get<double>();
    t.tree_scale = p.at("tree_scale").get<double>();
    for (const auto& jt : p.at("trees")) {
      Tree tree;
      for (const auto& jn : jt) {
        TreeNode n;
        if (jn.contains("feature")) {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          n.left = jn.at("left").get<int>();
          n.right = jn.at("right").get<int>();
        } else {
          n.value = jn.at("value").get<double>();
        }
        n.n_samples = jn.at("n").get<int>();
        tree.nodes.push_back(n);
      }
      t.trees.push_back(std::move(tree));
    }
    params = std::move(t);
  } else {
    throw DataError("unknown model parameter kind '" + kind + "'");
  }
  FitDiagnostics diag;
  if (j.contains("diagnostics")) {
    const auto& d = j.at("diagnostics");
    diag.n = d.value("n", 0);
    diag.d = d.value("d", 0);
    diag.iterations = d.value("iterations", 0);
    diag.last_delta = d.value("last_delta", 0.0);
  }
  return TrainedModel(std::move(spec), std::move(names), std::move(params), std::move(diag));
}

std::string TrainedModel::hash() const { return io::sha256_hex(to_json().dump()); }

TrainedModel fit_model(const ModelSpec& spec, const Dataset& data) {
  spec.validate();
  const auto& h = spec.hp;
  auto with_spec = [&](TrainedModel m) {
    return TrainedModel(spec, m.feature_names(), m.params(), m.diagnostics());
  };
  switch (spec.family) {
    case Family::Ar:
    case Family::Ols: return with_spec(fit_ols(data));
    case Family::Ridge: return with_spec(fit_ridge(data, h.lambda));
    case Family::Lasso: return with_spec(fit_elasticnet(data, h.lambda, 0.0, h.max_sweeps, h.tolerance));
    case Family::ElasticNet: return with_spec(fit_elasticnet(data, h.lambda, h.rho, h.max_sweeps, h.tolerance));
    case Family::KernelRidge:
      return with_spec(fit_kernel_ridge(data, h.lambda, KernelSpec{h.kernel, h.degree, h.coef0, h.gamma}, h.standardize));
    case Family::RandomForest: return fit_random_forest(data, spec);
    case Family::Gbdt: return fit_gbdt(data, spec);
    case Family::XgbTree: return fit_xgb(data, XgbBase::Tree, spec);
    case Family::XgbLinear: return fit_xgb(data, XgbBase::Linear, spec);
  }
  throw ConfigError("unhandled model family");
}

}  // namespace macrocast
