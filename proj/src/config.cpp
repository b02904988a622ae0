#include "macrocast/config.hpp"

#include <cstdlib>
#include <set>

#include "macrocast/error.hpp"
#include "macrocast/io.hpp"
#include "macrocast/learners/cv.hpp"

namespace macrocast {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) fail(path, "unknown key '" + k + "'");
  }
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json* field(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "must be a string");
  return v.get<std::string>();
}

int get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "must be an integer");
  return v.get<int>();
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "must be a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "must be a boolean");
  return v.get<bool>();
}

QuarterDate get_quarter(const json& v, const std::string& path) {
  try {
    return QuarterDate::parse(get_string(v, path));
  } catch (const DataError& e) {
    fail(path, e.what());
  }
}

std::vector<std::string> get_strings(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "must be an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_string(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<PeriodSlice> get_periods(const json& v, const std::string& path) {
  std::vector<PeriodSlice> out;
  if (v.is_string() && v.get<std::string>() == "presets") return PeriodSlice::presets();
  for (const auto& s : get_strings(v, path)) {
    if (s == "presets") {
      for (auto& p : PeriodSlice::presets()) out.push_back(std::move(p));
      continue;
    }
    try {
      out.push_back(PeriodSlice::parse(s));
    } catch (const ConfigError& e) {
      fail(path, e.what());
    }
  }
  return out;
}

FeatureSpec parse_features(const json& j, const std::string& path, FeatureSpec s) {
  only_keys(j, path, {"p_y", "p_x", "p_f", "horizon", "mode"});
  if (auto v = field(j, "p_y")) s.p_y = get_int(*v, join(path, "p_y"));
  if (auto v = field(j, "p_x")) s.p_x = get_int(*v, join(path, "p_x"));
  if (auto v = field(j, "p_f")) s.p_f = get_int(*v, join(path, "p_f"));
  if (auto v = field(j, "horizon")) s.horizon = get_int(*v, join(path, "horizon"));
  if (auto v = field(j, "mode")) {
    try {
      s.mode = parse_feature_mode(get_string(*v, join(path, "mode")));
    } catch (const ConfigError& e) {
      fail(join(path, "mode"), e.what());
    }
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return s;
}

RankRule parse_factors(const json& j, const std::string& path) {
  only_keys(j, path, {"rank", "threshold", "max_rank"});
  if (auto v = field(j, "rank")) {
    if (field(j, "threshold") || field(j, "max_rank")) fail(path, "give either rank or threshold/max_rank");
    const int r = get_int(*v, join(path, "rank"));
    if (r < 1) fail(join(path, "rank"), "must be >= 1");
    return FixedRank{r};
  }
  VarianceThreshold t;
  if (auto v = field(j, "threshold")) t.threshold = get_number(*v, join(path, "threshold"));
  if (auto v = field(j, "max_rank")) t.max_rank = get_int(*v, join(path, "max_rank"));
  if (!(t.threshold > 0 && t.threshold <= 1)) fail(join(path, "threshold"), "must lie in (0, 1]");
  if (t.max_rank < 1) fail(join(path, "max_rank"), "must be >= 1");
  return t;
}

RosterDefaults parse_roster(const json& j, const std::string& path) {
  only_keys(j, path,
            {"forest_trees", "forest_depth", "forest_min_leaf", "forest_feature_fraction", "boost_rounds", "boost_depth",
             "boost_learning_rate", "linear_boost_rounds", "linear_boost_learning_rate"});
  RosterDefaults d;
  auto i = [&](const char* k, int& out) {
    if (auto v = field(j, k)) {
      out = get_int(*v, join(path, k));
      if (out < 1) fail(join(path, k), "must be >= 1");
    }
  };
  auto r = [&](const char* k, double& out) {
    if (auto v = field(j, k)) {
      out = get_number(*v, join(path, k));
      if (!(out > 0 && out <= 1)) fail(join(path, k), "must lie in (0, 1]");
    }
  };
  i("forest_trees", d.forest_trees);
  i("forest_depth", d.forest_depth);
  i("forest_min_leaf", d.forest_min_leaf);
  r("forest_feature_fraction", d.forest_feature_fraction);
  i("boost_rounds", d.boost_rounds);
  i("boost_depth", d.boost_depth);
  r("boost_learning_rate", d.boost_learning_rate);
  i("linear_boost_rounds", d.linear_boost_rounds);
  r("linear_boost_learning_rate", d.linear_boost_learning_rate);
  return d;
}

ModelEntry parse_model(const json& j, const std::string& path, const FeatureSpec& features, const RankRule& rank,
                       const RosterDefaults& defaults) {
  ModelEntry e;
  try {
    if (j.is_string()) {
      e = roster_entry(j.get<std::string>(), features, defaults);
      e.rank = rank;
      return e;
    }
    only_keys(j, path, {"name", "id", "hyperparams", "grid", "features"});
    const json* name = field(j, "name");
    if (!name) fail(path, "missing required key 'name'");
    e = roster_entry(get_string(*name, join(path, "name")), features, defaults);
  } catch (const ConfigError& err) {
    const std::string msg = err.what();
    if (msg.rfind(path, 0) == 0) throw;
    fail(path, msg);
  }
  e.rank = rank;
  if (auto v = field(j, "id")) e.id = get_string(*v, join(path, "id"));
  if (auto v = field(j, "features")) e.features = parse_features(*v, join(path, "features"), e.features);
  if (auto v = field(j, "grid")) {
    const std::string gp = join(path, "grid");
    if (!v->is_object()) fail(gp, "must be an object of value lists");
    std::map<std::string, std::vector<json>> grid;
    for (const auto& [k, vals] : v->items()) {
      if (!vals.is_array() || vals.empty()) fail(join(gp, k), "must be a nonempty array");
      grid[k] = std::vector<json>(vals.begin(), vals.end());
    }
    try {
      e.grid = expand_grid(e.grid.front(), grid);
    } catch (const ConfigError& err) {
      fail(gp, err.what());
    }
  }
  if (auto v = field(j, "hyperparams")) {
    const std::string hp = join(path, "hyperparams");
    if (!v->is_object()) fail(hp, "must be an object");
    for (auto& spec : e.grid) {
      for (const auto& [k, val] : v->items()) {
        try {
          const auto& names = hyperparam_names();
          if (std::find(names.begin(), names.end(), k) == names.end()) fail(join(hp, k), "unknown hyperparameter");
          set_hyperparam(spec.hp, spec.loss, k, val);
        } catch (const ConfigError& err) {
          const std::string msg = err.what();
          if (msg.rfind(hp, 0) == 0) throw;
          fail(join(hp, k), msg);
        }
      }
      try {
        spec.validate();
      } catch (const ConfigError& err) {
        fail(hp, err.what());
      }
    }
  }
  return e;
}

EnsembleSpec parse_ensemble(const json& j, const std::string& path) {
  if (j.is_string()) {
    auto s = parse_ensemble_name(j.get<std::string>());
    if (!s) fail(path, "unknown ensemble name '" + j.get<std::string>() + "'");
    return *s;
  }
  only_keys(j, path, {"id", "kind", "members", "window", "beta", "loss"});
  EnsembleSpec s;
  const json* id = field(j, "id");
  const json* kind = field(j, "kind");
  const json* members = field(j, "members");
  if (!id || !kind || !members) fail(path, "requires 'id', 'kind' and 'members'");
  s.id = get_string(*id, join(path, "id"));
  const std::string k = get_string(*kind, join(path, "kind"));
  if (k == "mean") s.kind = EnsembleSpec::Kind::Mean;
  else if (k == "median") s.kind = EnsembleSpec::Kind::Median;
  else if (k == "reciprocal") s.kind = EnsembleSpec::Kind::Reciprocal;
  else if (k == "exponential") s.kind = EnsembleSpec::Kind::Exponential;
  else fail(join(path, "kind"), "must be mean, median, reciprocal or exponential");
  s.members = get_strings(*members, join(path, "members"));
  if (auto v = field(j, "window")) s.window = get_int(*v, join(path, "window"));
  if (auto v = field(j, "beta")) s.beta = get_number(*v, join(path, "beta"));
  if (auto v = field(j, "loss")) {
    const std::string l = get_string(*v, join(path, "loss"));
    if (l == "AE") s.loss = LossKind::absolute();
    else if (l == "SE") s.loss = LossKind::squared();
    else fail(join(path, "loss"), "must be AE or SE");
  }
  return s;
}

}  // namespace

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  only_keys(j, "config", {"data", "seed", "features", "factors", "roster", "models", "backtest", "ensembles", "evaluation", "explain"});
  RunConfig cfg;
  cfg.resolved = nlohmann::ordered_json::parse(j.dump());

  const json* data = field(j, "data");
  if (!data) fail("config", "missing required key 'data'");
  only_keys(*data, "data", {"path", "target", "start", "end", "impute"});
  if (!field(*data, "path") || !field(*data, "target")) fail("data", "requires 'path' and 'target'");
  std::filesystem::path p = get_string(data->at("path"), "data.path");
  if (p.is_relative()) p = std::filesystem::absolute(base_dir / p).lexically_normal();
  cfg.data.path = p;
  cfg.resolved["data"]["path"] = p.string();
  cfg.data.target = get_string(data->at("target"), "data.target");
  if (auto v = field(*data, "start")) cfg.data.start = get_quarter(*v, "data.start");
  if (auto v = field(*data, "end")) cfg.data.end = get_quarter(*v, "data.end");
  if (auto v = field(*data, "impute")) {
    try {
      cfg.data.impute = parse_impute_method(get_string(*v, "data.impute"));
    } catch (const ConfigError& e) {
      fail("data.impute", e.what());
    }
  }

  if (auto v = field(j, "seed")) {
    if (!v->is_number_unsigned()) fail("seed", "must be a nonnegative integer");
    cfg.seed = v->get<std::uint64_t>();
  }
  if (const char* env = std::getenv("MACROCAST_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (env[used] != '\0') throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      fail("MACROCAST_SEED", "must be a nonnegative integer");
    }
  }
  cfg.resolved["seed"] = cfg.seed;
  cfg.plan.seed = cfg.seed;

  FeatureSpec features;
  if (auto v = field(j, "features")) features = parse_features(*v, "features", features);
  RankRule rank = VarianceThreshold{};
  if (auto v = field(j, "factors")) rank = parse_factors(*v, "factors");
  RosterDefaults defaults;
  if (auto v = field(j, "roster")) defaults = parse_roster(*v, "roster");

  const json* models = field(j, "models");
  if (!models) fail("config", "missing required key 'models'");
  if (!models->is_array() || models->empty()) fail("models", "must be a nonempty array");
  for (std::size_t i = 0; i < models->size(); ++i) {
    cfg.plan.models.push_back(parse_model((*models)[i], "models[" + std::to_string(i) + "]", features, rank, defaults));
  }

  cfg.plan.segments = BacktestPlan::four_period_segments();
  if (auto b = field(j, "backtest")) {
    only_keys(*b, "backtest", {"segments", "refit_every", "min_train_rows", "cv_folds", "continuous_expanding"});
    if (auto v = field(*b, "segments")) {
      if (v->is_string()) {
        if (v->get<std::string>() != "four_period") fail("backtest.segments", "must be \"four_period\" or a list");
      } else {
        if (!v->is_array() || v->empty()) fail("backtest.segments", "must be \"four_period\" or a nonempty list");
        cfg.plan.segments.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
          const std::string sp = "backtest.segments[" + std::to_string(i) + "]";
          const auto& s = (*v)[i];
          only_keys(s, sp, {"train_start", "forecast_start", "forecast_end"});
          if (!field(s, "train_start") || !field(s, "forecast_start") || !field(s, "forecast_end")) {
            fail(sp, "requires train_start, forecast_start and forecast_end");
          }
          cfg.plan.segments.push_back({get_quarter(s.at("train_start"), sp + ".train_start"),
                                       get_quarter(s.at("forecast_start"), sp + ".forecast_start"),
                                       get_quarter(s.at("forecast_end"), sp + ".forecast_end")});
        }
      }
    }
    if (auto v = field(*b, "refit_every")) cfg.plan.refit_every = get_int(*v, "backtest.refit_every");
    if (auto v = field(*b, "min_train_rows")) cfg.plan.min_train_rows = get_int(*v, "backtest.min_train_rows");
    if (auto v = field(*b, "cv_folds")) cfg.plan.cv_folds = get_int(*v, "backtest.cv_folds");
    if (auto v = field(*b, "continuous_expanding")) cfg.plan.continuous_expanding = get_bool(*v, "backtest.continuous_expanding");
  }
  try {
    cfg.plan.validate();
  } catch (const ConfigError& e) {
    fail("backtest", e.what());
  }

  std::set<std::string> ids;
  for (const auto& m : cfg.plan.models) ids.insert(m.id);
  if (auto v = field(j, "ensembles")) {
    if (!v->is_array()) fail("ensembles", "must be an array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string ep = "ensembles[" + std::to_string(i) + "]";
      EnsembleSpec s = parse_ensemble((*v)[i], ep);
      try {
        s.validate();
      } catch (const ConfigError& e) {
        fail(ep, e.what());
      }
      for (const auto& m : s.members) {
        if (!ids.count(m)) fail(ep, "member '" + m + "' is not a configured model");
      }
      if (!ids.insert(s.id).second) fail(ep, "id '" + s.id + "' is already used");
      cfg.ensembles.push_back(std::move(s));
    }
  }

  cfg.evaluation.periods = PeriodSlice::presets();
  if (auto e = field(j, "evaluation")) {
    only_keys(*e, "evaluation", {"periods", "baseline", "robust_se", "inclusive", "inclusive_intercept"});
    if (auto v = field(*e, "periods")) cfg.evaluation.periods = get_periods(*v, "evaluation.periods");
    if (auto v = field(*e, "baseline")) cfg.evaluation.baseline = get_string(*v, "evaluation.baseline");
    if (auto v = field(*e, "robust_se")) cfg.evaluation.robust_se = get_bool(*v, "evaluation.robust_se");
    if (auto v = field(*e, "inclusive_intercept")) {
      cfg.evaluation.inclusive_intercept = get_bool(*v, "evaluation.inclusive_intercept");
    }
    if (auto v = field(*e, "inclusive")) {
      if (!v->is_array()) fail("evaluation.inclusive", "must be an array of [subject, rival] pairs");
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string ip = "evaluation.inclusive[" + std::to_string(i) + "]";
        const auto pair = get_strings((*v)[i], ip);
        if (pair.size() != 2) fail(ip, "must name exactly two models");
        for (const auto& m : pair) {
          if (!ids.count(m)) fail(ip, "'" + m + "' is not a configured model or ensemble");
        }
        cfg.evaluation.inclusive.emplace_back(pair[0], pair[1]);
      }
    }
  }

  if (auto x = field(j, "explain")) {
    only_keys(*x, "explain",
              {"models", "periods", "background_rows", "n_permutations", "max_exact_features", "through_factors", "top_k",
               "dependence"});
    if (auto v = field(*x, "models")) {
      cfg.explain.models = get_strings(*v, "explain.models");
      for (const auto& m : cfg.explain.models) {
        const bool single = std::any_of(cfg.plan.models.begin(), cfg.plan.models.end(), [&](const ModelEntry& e) { return e.id == m; });
        if (!single) fail("explain.models", "'" + m + "' is not a configured single model");
      }
    }
    if (auto v = field(*x, "periods")) cfg.explain.periods = get_periods(*v, "explain.periods");
    auto& o = cfg.explain.options;
    if (auto v = field(*x, "background_rows")) o.background_rows = get_int(*v, "explain.background_rows");
    if (auto v = field(*x, "n_permutations")) o.n_permutations = get_int(*v, "explain.n_permutations");
    if (auto v = field(*x, "max_exact_features")) o.max_exact_features = get_int(*v, "explain.max_exact_features");
    if (auto v = field(*x, "through_factors")) o.through_factors = get_bool(*v, "explain.through_factors");
    if (auto v = field(*x, "top_k")) cfg.explain.top_k = get_int(*v, "explain.top_k");
    if (auto v = field(*x, "dependence")) cfg.explain.dependence = get_strings(*v, "explain.dependence");
    if (o.background_rows < 1) fail("explain.background_rows", "must be >= 1");
    if (o.n_permutations < 64) fail("explain.n_permutations", "must be >= 64");
    if (o.max_exact_features < 1 || o.max_exact_features > kMaxExactFeatures) {
      fail("explain.max_exact_features", "must lie in [1, " + std::to_string(kMaxExactFeatures) + "]");
    }
    if (cfg.explain.top_k < 1) fail("explain.top_k", "must be >= 1");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

std::string config_hash(const RunConfig& cfg) { return io::sha256_hex(cfg.resolved.dump()); }

}  // namespace macrocast
