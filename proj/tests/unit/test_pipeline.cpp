#include <cstdlib>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "macrocast/config.hpp"
#include "macrocast/error.hpp"
#include "macrocast/pipeline.hpp"
#include "macrocast/roster.hpp"
#include "support/panels.hpp"
#include "support/testgen.hpp"

namespace mc = macrocast;
using mc::QuarterDate;

namespace {

mc::RosterDefaults small_roster() {
  mc::RosterDefaults d;
  d.forest_trees = 10;
  d.boost_rounds = 10;
  d.linear_boost_rounds = 10;
  return d;
}

mc::FeatureSpec base_features() {
  mc::FeatureSpec f;
  f.p_y = 2;
  f.p_x = 1;
  f.p_f = 1;
  return f;
}

mc::BacktestPlan plan_for(const std::vector<std::string>& names, std::vector<mc::Segment> segments) {
  mc::BacktestPlan plan;
  plan.segments = std::move(segments);
  for (const auto& n : names) plan.models.push_back(mc::roster_entry(n, base_features(), small_roster()));
  plan.seed = 11;
  return plan;
}

const mc::ForecastRecord* find(const std::vector<mc::ForecastRecord>& rs, const std::string& id, QuarterDate q) {
  for (const auto& r : rs)
    if (r.model_id == id && r.target_date == q) return &r;
  return nullptr;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Features, TargetOnlyLagBookkeeping) {
  Eigen::MatrixXd v(4, 1);
  v << 1, 2, 3, 4;
  const auto panel = testgen::make_panel({2000, 1}, {"y"}, v);
  mc::FeatureSpec spec;
  spec.p_y = 1;
  spec.p_x = 0;
  spec.horizon = 1;
  spec.mode = mc::FeatureMode::TargetOnly;
  const auto ds = mc::build_features(panel, spec);
  ASSERT_EQ(ds.features.rows(), 3);
  ASSERT_EQ(ds.features.cols(), 1);
  EXPECT_EQ(ds.feature_names[0], "y_lag1");
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(ds.features(i, 0), i + 1.0);
    EXPECT_EQ(ds.targets(i), i + 2.0);
  }
}

TEST(Features, LagLayoutAgainstHandIndexing) {
  testgen::Gen g(5);
  const Eigen::MatrixXd v = g.matrix(30, 3);
  const auto panel = testgen::make_panel({2001, 2}, {"y", "a", "b"}, v);
  mc::FeatureSpec spec;
  spec.p_y = 3;
  spec.p_x = 2;
  spec.horizon = 2;
  const auto ds = mc::build_features(panel, spec);
  // first usable origin needs y_{t-2} and x_{t-2}: t = 2; last needs y_{t+2}: t = 27
  ASSERT_EQ(ds.features.rows(), 26);
  ASSERT_EQ(ds.features.cols(), 3 + 2 * 3);
  const std::vector<std::string> expected = {"y_lag1", "y_lag2", "y_lag3", "a_lag0", "a_lag1",
                                             "a_lag2", "b_lag0", "b_lag1", "b_lag2"};
  EXPECT_EQ(ds.feature_names, expected);
  for (int r = 0; r < 26; ++r) {
    const int t = r + 2;
    EXPECT_EQ(ds.features(r, 0), v(t, 0));
    EXPECT_EQ(ds.features(r, 1), v(t - 1, 0));
    EXPECT_EQ(ds.features(r, 2), v(t - 2, 0));
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j <= 2; ++j) EXPECT_EQ(ds.features(r, 3 + 3 * k + j), v(t - j, 1 + k));
    EXPECT_EQ(ds.targets(r), v(t + 2, 0));
  }
}

TEST(Features, FactorColumnCount) {
  const auto panel = testgen::synthetic_panel(3, 12, 60);
  const auto ind = panel.indicator_columns();
  Eigen::MatrixXd x(panel.values.rows(), static_cast<Eigen::Index>(ind.size()));
  for (std::size_t k = 0; k < ind.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = panel.values.col(panel.column(ind[k]));
  const auto fit = mc::fit_factors(x, ind, mc::FixedRank{2});
  for (int p_y : {1, 3}) {
    for (int p_f : {0, 1, 2}) {
      mc::FeatureSpec spec;
      spec.p_y = p_y;
      spec.p_f = p_f;
      spec.mode = mc::FeatureMode::FactorAugmented;
      const auto ds = mc::build_features(panel, spec, &fit);
      EXPECT_EQ(ds.features.cols(), p_y + 2 * (p_f + 1));
      EXPECT_EQ(ds.feature_names[static_cast<std::size_t>(p_y)], "F1_lag0");
    }
  }
}

TEST(Features, RawTwentyVariablesGives44Columns) {
  const auto panel = testgen::synthetic_panel(4, 20, 40);
  mc::FeatureSpec spec;
  spec.p_y = 4;
  spec.p_x = 1;
  const auto ds = mc::build_features(panel, spec);
  EXPECT_EQ(ds.features.cols(), 4 + 20 * 2);
}

TEST(Features, MissingLagsDropRows) {
  Eigen::MatrixXd v(12, 2);
  for (int i = 0; i < 12; ++i) {
    v(i, 0) = i;
    v(i, 1) = 10 + i;
  }
  v(5, 1) = std::nan("");
  const auto panel = testgen::make_panel({2000, 1}, {"y", "x"}, v);
  mc::FeatureSpec spec;
  spec.p_y = 1;
  spec.p_x = 1;
  const auto d = mc::build_design(panel, spec);
  const auto ds = mc::build_features(panel, spec);
  // origins 1..10 have both lags and a target; x is missing for origins 5 and 6
  EXPECT_EQ(ds.features.rows(), 8);
  EXPECT_FALSE(d.row_complete(5));
  EXPECT_FALSE(d.row_complete(6));
  EXPECT_TRUE(d.row_complete(7));
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) EXPECT_TRUE(ds.features.row(i).allFinite());
}

TEST(Features, ZeroUsableRowsIsAnError) {
  Eigen::MatrixXd v(3, 1);
  v << 1, 2, 3;
  const auto panel = testgen::make_panel({2000, 1}, {"y"}, v);
  mc::FeatureSpec spec;
  spec.p_y = 3;
  spec.mode = mc::FeatureMode::TargetOnly;
  EXPECT_THROW(mc::build_features(panel, spec), mc::DataError);
}

TEST(Features, SpecValidation) {
  mc::FeatureSpec s;
  s.p_y = 0;
  EXPECT_THROW(s.validate(), mc::ConfigError);
  s = {};
  s.horizon = 0;
  EXPECT_THROW(s.validate(), mc::ConfigError);
  s = {};
  s.mode = mc::FeatureMode::FactorAugmented;
  const auto panel = testgen::synthetic_panel(1, 5, 30);
  EXPECT_THROW(mc::build_features(panel, s), mc::ConfigError);
}

TEST(Backtest, NoiselessArOneIsRecovered) {
  const int n = 60;
  Eigen::MatrixXd v(n, 1);
  v(0, 0) = 5.0;
  for (int i = 1; i < n; ++i) v(i, 0) = 0.9 * v(i - 1, 0);
  const auto panel = testgen::make_panel({2000, 1}, {"y"}, v);
  mc::ModelEntry e;
  e.id = "AR1";
  e.grid = {mc::ModelSpec{}};
  e.features.p_y = 1;
  e.features.mode = mc::FeatureMode::TargetOnly;
  mc::BacktestPlan plan;
  plan.models = {e};
  plan.segments = {{{2000, 1}, {2005, 1}, {2014, 4}}};
  const auto res = mc::run_backtest(panel, plan);
  ASSERT_EQ(res.records.size(), 40u);
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.actual.has_value());
    EXPECT_NEAR(r.prediction, *r.actual, 1e-6);
    EXPECT_EQ(r.target_date, r.origin.plus(r.horizon));
  }
}

TEST(Backtest, FourPeriodRecordCount) {
  const auto panel = testgen::synthetic_panel(21, 8, 128);
  const auto plan = plan_for({"AR", "FM-AR-SE", "RF-SE"}, mc::BacktestPlan::four_period_segments());
  EXPECT_EQ(plan.forecast_quarters(), 112);
  const auto res = mc::run_backtest(panel, plan);
  EXPECT_EQ(res.records.size(), 3u * 112u);
  EXPECT_EQ(res.fits.size(), res.records.size());
  std::set<std::pair<std::string, int>> cells;
  for (const auto& r : res.records) {
    EXPECT_TRUE(std::isfinite(r.prediction));
    cells.insert({r.model_id, r.target_date.ordinal()});
  }
  EXPECT_EQ(cells.size(), res.records.size());
  EXPECT_EQ(res.model_hashes.size(), 3u);
}

// Perturbing every value dated >= q must leave the forecast for q unchanged.
TEST(Backtest, LeakPerturbationProperty) {
  const auto panel = testgen::synthetic_panel(8, 10, 60);
  const std::vector<std::string> models = {"AR", "FM-AR-SE", "RF-SE", "GBDT-SE", "FM-LASSO", "FM-KRR-RBF"};
  const mc::Segment seg{{1992, 1}, {1998, 1}, {2006, 4}};
  const auto plan = plan_for(models, {seg});
  const auto base = mc::run_backtest(panel, plan);

  testgen::Gen g(99);
  for (int trial = 0; trial < 4; ++trial) {
    const QuarterDate q = seg.forecast_start.plus(g.integer(0, 35));
    mc::Panel bent = panel;
    for (int i = bent.row(q); i < static_cast<int>(bent.index.size()); ++i)
      for (Eigen::Index j = 0; j < bent.values.cols(); ++j) bent.values(i, j) += 50.0 * g.normal();
    auto one = plan;
    one.segments = {{seg.train_start, q, q}};
    const auto res = mc::run_backtest(bent, one);
    for (const auto& id : models) {
      const auto* a = find(base.records, id, q);
      const auto* b = find(res.records, id, q);
      ASSERT_TRUE(a && b) << id << " " << q.to_string();
      EXPECT_EQ(a->prediction, b->prediction) << id << " " << q.to_string();
      EXPECT_NE(a->actual, b->actual);
    }
  }
}

TEST(Backtest, WorkerCountAndModelOrderDoNotMatter) {
  const auto panel = testgen::synthetic_panel(12, 8, 60);
  const mc::Segment seg{{1992, 1}, {1998, 1}, {2003, 4}};
  auto plan = plan_for({"AR", "RF-SE", "XGB-GBTREE", "FM-GBDT-HUBER"}, {seg});
  plan.refit_every = 2;
  const auto a = mc::run_backtest(panel, plan, 1);
  const auto b = mc::run_backtest(panel, plan, 3);
  std::reverse(plan.models.begin(), plan.models.end());
  const auto c = mc::run_backtest(panel, plan, 2);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.records, c.records);
  EXPECT_EQ(a.model_hashes, c.model_hashes);
  EXPECT_EQ(mc::records_to_csv(a.records), mc::records_to_csv(c.records));
}

TEST(Backtest, TrainingWindowsGrowWithinASegment) {
  const auto panel = testgen::synthetic_panel(13, 6, 128);
  const auto plan = plan_for({"AR", "FM-AR-SE"}, mc::BacktestPlan::four_period_segments());
  const auto res = mc::run_backtest(panel, plan);
  for (const auto& seg : plan.segments) {
    for (const auto& id : {"AR", "FM-AR-SE"}) {
      int prev = -1;
      for (const auto& f : res.fits) {
        if (f.model_id != id || f.target_date < seg.forecast_start || seg.forecast_end < f.target_date) continue;
        EXPECT_GE(f.n_train, prev);
        EXPECT_LT(f.train_end.plus(1), f.target_date);
        prev = f.n_train;
      }
    }
  }
}

TEST(Backtest, SegmentsRestartAtTheirOwnTrainStart) {
  const auto panel = testgen::synthetic_panel(14, 6, 128);
  auto plan = plan_for({"AR"}, mc::BacktestPlan::four_period_segments());
  const auto split = mc::run_backtest(panel, plan);
  plan.continuous_expanding = true;
  const auto joined = mc::run_backtest(panel, plan);
  auto n_at = [](const mc::BacktestResult& r, QuarterDate q) {
    for (const auto& f : r.fits)
      if (f.target_date == q) return f.n_train;
    return -1;
  };
  // segment b trains on 1996 onwards; the continuous reading starts at 1992
  EXPECT_EQ(n_at(joined, {2000, 1}) - n_at(split, {2000, 1}), 16);
  EXPECT_EQ(n_at(joined, {1996, 1}), n_at(split, {1996, 1}));
}

TEST(Backtest, ShortWindowIsSkippedWithWarning) {
  const auto panel = testgen::synthetic_panel(15, 4, 40);
  auto plan = plan_for({"AR"}, {{{1992, 1}, {1993, 2}, {1995, 4}}});
  plan.min_train_rows = 8;
  const auto res = mc::run_backtest(panel, plan);
  ASSERT_FALSE(res.records.empty());
  EXPECT_GT(res.log.warning_count(), 0u);
  EXPECT_LT(res.records.size(), 11u);
  for (const auto& f : res.fits) EXPECT_GE(f.n_train, 8);
}

TEST(Backtest, FitAtOriginMatchesBacktest) {
  const auto panel = testgen::synthetic_panel(16, 8, 60);
  const mc::Segment seg{{1992, 1}, {1998, 1}, {2001, 4}};
  const auto plan = plan_for({"RF-SE", "FM-LASSO"}, {seg});
  const auto res = mc::run_backtest(panel, plan);
  for (const auto& entry : plan.models) {
    for (QuarterDate q : {QuarterDate{1998, 1}, QuarterDate{2000, 3}}) {
      const auto fit = mc::fit_at_origin(panel, plan, entry, q);
      EXPECT_EQ(fit.origin, q.plus(-1));
      EXPECT_EQ(fit.window_start, seg.train_start);
      const double p = fit.model.predict(std::span<const double>(fit.instance.data(), static_cast<std::size_t>(fit.instance.size())));
      const auto* r = find(res.records, entry.id, q);
      ASSERT_NE(r, nullptr);
      EXPECT_EQ(p, r->prediction) << entry.id << " " << q.to_string();
    }
  }
}

TEST(Backtest, PlanValidation) {
  const auto panel = testgen::synthetic_panel(17, 4, 60);
  auto plan = plan_for({"AR"}, {{{1995, 1}, {1994, 1}, {1996, 4}}});
  EXPECT_THROW(plan.validate(), mc::ConfigError);
  plan.segments = {{{1992, 1}, {1995, 1}, {1997, 4}}, {{1993, 1}, {1997, 1}, {1998, 4}}};
  EXPECT_THROW(plan.validate(), mc::ConfigError);
  plan.segments = {{{1992, 1}, {1995, 1}, {2030, 4}}};
  EXPECT_THROW(plan.validate(panel), mc::ConfigError);
  plan.segments = {{{1990, 1}, {1995, 1}, {1996, 4}}};
  EXPECT_THROW(plan.validate(panel), mc::ConfigError);
  plan = plan_for({"AR", "AR"}, {{{1992, 1}, {1995, 1}, {1996, 4}}});
  EXPECT_THROW(plan.validate(), mc::ConfigError);
  plan = plan_for({"AR"}, {{{1992, 1}, {1995, 1}, {1996, 4}}});
  plan.refit_every = 0;
  EXPECT_THROW(plan.validate(), mc::ConfigError);
}

TEST(Records, CsvRoundTripThousandRecords) {
  testgen::Gen g(3);
  std::vector<mc::ForecastRecord> rs;
  for (int i = 0; i < 1000; ++i) {
    mc::ForecastRecord r;
    r.model_id = "M" + std::to_string(g.integer(0, 30));
    r.horizon = g.integer(1, 4);
    r.origin = QuarterDate::from_ordinal(QuarterDate{1990, 1}.ordinal() + g.integer(0, 150));
    r.target_date = r.origin.plus(r.horizon);
    r.prediction = g.normal() * std::pow(10.0, g.integer(-8, 8));
    if (g.uniform() < 0.8) r.actual = g.normal();
    rs.push_back(r);
  }
  const auto back = mc::records_from_csv(mc::records_to_csv(rs), "test");
  ASSERT_EQ(back.size(), rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) EXPECT_EQ(back[i], rs[i]) << i;
}

TEST(Records, CsvHeaderAndMalformedRows) {
  const std::string csv = mc::records_to_csv({});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model_id,origin,target,horizon,prediction,actual");
  EXPECT_ANY_THROW(mc::records_from_csv("model_id,origin,target,horizon,prediction,actual\nA,2000Q1,2000Q3,1,1.0,\n", "t"));
  EXPECT_ANY_THROW(mc::records_from_csv("model_id,origin,target,horizon,prediction,actual\nA,2000Q1,2000Q2,1,abc,\n", "t"));
}

TEST(Records, SortOrder) {
  std::vector<mc::ForecastRecord> rs(3);
  rs[0].model_id = "B";
  rs[0].target_date = {2000, 1};
  rs[1].model_id = "A";
  rs[1].target_date = {2001, 1};
  rs[2].model_id = "A";
  rs[2].target_date = {2000, 2};
  mc::sort_records(rs);
  EXPECT_EQ(rs[0].model_id, "A");
  EXPECT_EQ(rs[0].target_date, (QuarterDate{2000, 2}));
  EXPECT_EQ(rs[2].model_id, "B");
}

class RunDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testgen::temp_dir("run");
    const auto panel = testgen::synthetic_panel(18, 6, 60);
    plan_ = plan_for({"AR", "RF-SE"}, {{{1992, 1}, {1998, 1}, {2001, 4}}});
    res_ = mc::run_backtest(panel, plan_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  void persist(const std::filesystem::path& d, const std::string& stamp) {
    mc::RunFiles files;
    files.records = res_.records;
    files.fits = res_.fits;
    files.transform_log = res_.log.to_jsonl();
    files.config = "{}\n";
    mc::RunManifest m;
    m.config_hash = "abc";
    m.seed = plan_.seed;
    m.model_hashes = res_.model_hashes;
    m.created_at = stamp;
    mc::persist_run(d, files, m);
  }

  std::filesystem::path dir_;
  mc::BacktestPlan plan_;
  mc::BacktestResult res_;
};

TEST_F(RunDir, PersistLoadIsIdentity) {
  persist(dir_ / "run", "2020-01-01T00:00:00Z");
  for (const char* f : {"manifest.json", "forecasts.csv", "transform_log.jsonl", "config.json", "fits.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir_ / "run" / f)) << f;
  const auto loaded = mc::load_run(dir_ / "run");
  EXPECT_EQ(loaded.records, res_.records);
  EXPECT_EQ(loaded.manifest.seed, plan_.seed);
  EXPECT_EQ(loaded.manifest.model_hashes, res_.model_hashes);
  EXPECT_EQ(loaded.manifest.config_hash, "abc");
}

TEST_F(RunDir, TamperedRowIsAnIntegrityError) {
  persist(dir_ / "run", "t");
  const auto path = dir_ / "run" / "forecasts.csv";
  std::string text = slurp(path);
  const auto pos = text.find('\n', text.find('\n') + 1) + 1;
  const auto comma = text.find(",", text.find(",", text.find(",", text.find(",", pos) + 1) + 1) + 1);
  text[comma + 1] = text[comma + 1] == '7' ? '8' : '7';
  std::ofstream(path, std::ios::binary) << text;
  EXPECT_THROW(mc::load_run(dir_ / "run"), mc::IntegrityError);
}

TEST_F(RunDir, MissingFileIsAnIntegrityError) {
  persist(dir_ / "run", "t");
  std::filesystem::remove(dir_ / "run" / "fits.csv");
  EXPECT_THROW(mc::load_run(dir_ / "run"), mc::IntegrityError);
}

TEST_F(RunDir, RepeatedRunsAreByteIdenticalApartFromTimestamps) {
  persist(dir_ / "a", "2020-01-01T00:00:00Z");
  const auto panel = testgen::synthetic_panel(18, 6, 60);
  res_ = mc::run_backtest(panel, plan_, 2);
  persist(dir_ / "b", "2021-06-30T12:00:00Z");
  for (const char* f : {"forecasts.csv", "transform_log.jsonl", "fits.csv", "config.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  auto ma = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  auto mb = nlohmann::json::parse(slurp(dir_ / "b" / "manifest.json"));
  EXPECT_NE(ma["created_at"], mb["created_at"]);
  ma.erase("created_at");
  mb.erase("created_at");
  EXPECT_EQ(ma, mb);
}

TEST_F(RunDir, PersistReplacesAnExistingDirectory) {
  persist(dir_ / "run", "t");
  std::ofstream(dir_ / "run" / "stale.txt") << "x";
  persist(dir_ / "run", "t");
  EXPECT_FALSE(std::filesystem::exists(dir_ / "run" / "stale.txt"));
  EXPECT_NO_THROW(mc::load_run(dir_ / "run"));
}

TEST(Roster, GroupsFollowTheTable) {
  EXPECT_EQ(mc::single_model_names().size(), 19u);
  EXPECT_EQ(mc::group_members(mc::ModelGroup::G1), (std::vector<std::string>{"AR", "FM-AR-SE"}));
  EXPECT_EQ(mc::group_members(mc::ModelGroup::G2).size(), 7u);
  EXPECT_EQ(mc::group_members(mc::ModelGroup::G3).size(), 10u);
  for (const auto& n : mc::single_model_names()) {
    const auto e = mc::roster_entry(n);
    EXPECT_EQ(e.id, n);
    const bool fm = n.rfind("FM-", 0) == 0;
    EXPECT_EQ(e.features.mode == mc::FeatureMode::FactorAugmented, fm) << n;
    EXPECT_TRUE(mc::is_single_model_name(n));
  }
  EXPECT_EQ(mc::roster_entry("AR").features.mode, mc::FeatureMode::TargetOnly);
  EXPECT_FALSE(mc::group_of("NOPE").has_value());
  EXPECT_THROW(mc::roster_entry("NOPE"), mc::ConfigError);
}

namespace {

nlohmann::json minimal_config() {
  return nlohmann::json::parse(R"({
    "data": {"path": "data/panel.csv", "target": "GDP"},
    "seed": 3,
    "models": ["AR", "RF-SE"]
  })");
}

struct EnvGuard {
  explicit EnvGuard(const char* value) {
    if (value) ::setenv("MACROCAST_SEED", value, 1);
    else ::unsetenv("MACROCAST_SEED");
  }
  ~EnvGuard() { ::unsetenv("MACROCAST_SEED"); }
};

}  // namespace

TEST(Config, MinimalConfigDefaults) {
  EnvGuard env(nullptr);
  const auto cfg = mc::parse_config(minimal_config(), "/base/dir");
  EXPECT_EQ(cfg.data.path, std::filesystem::path("/base/dir/data/panel.csv"));
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.plan.seed, 3u);
  EXPECT_EQ(cfg.plan.models.size(), 2u);
  EXPECT_EQ(cfg.plan.forecast_quarters(), 112);
  EXPECT_EQ(cfg.plan.refit_every, 1);
  EXPECT_EQ(cfg.resolved["data"]["path"], "/base/dir/data/panel.csv");
}

TEST(Config, SeedEnvironmentOverride) {
  EnvGuard env("42");
  const auto cfg = mc::parse_config(minimal_config(), "/b");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.resolved["seed"], 42u);
  EnvGuard bad("4x");
  EXPECT_THROW(mc::parse_config(minimal_config(), "/b"), mc::ConfigError);
}

TEST(Config, StrictKeysNameTheField) {
  EnvGuard env(nullptr);
  auto j = minimal_config();
  j["bogus"] = 1;
  try {
    mc::parse_config(j, "/b");
    FAIL();
  } catch (const mc::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
  j = minimal_config();
  j["backtest"] = {{"refit_every", "two"}};
  try {
    mc::parse_config(j, "/b");
    FAIL();
  } catch (const mc::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("backtest.refit_every"), std::string::npos);
  }
  j = minimal_config();
  j.erase("models");
  EXPECT_THROW(mc::parse_config(j, "/b"), mc::ConfigError);
  j = minimal_config();
  j["models"] = {"NOPE"};
  EXPECT_THROW(mc::parse_config(j, "/b"), mc::ConfigError);
}

TEST(Config, ShippedConfigParses) {
  EnvGuard env(nullptr);
  const auto cfg = mc::load_config(std::filesystem::path(MACROCAST_SOURCE_DIR) / "configs" / "synthetic.json");
  EXPECT_EQ(cfg.plan.models.size(), 19u);
  EXPECT_EQ(cfg.ensembles.size(), 8u);
  EXPECT_TRUE(std::filesystem::exists(cfg.data.path));
  EXPECT_FALSE(mc::config_hash(cfg).empty());
}
