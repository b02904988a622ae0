#include "macrocast/learners/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "macrocast/error.hpp"
#include "macrocast/rng.hpp"

namespace macrocast {

namespace {

std::vector<int> all_rows(Eigen::Index n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// Rows for one boosting stage: everything, or a seeded sample without replacement.
std::vector<int> stage_rows(Eigen::Index n, double fraction, std::uint64_t seed) {
  std::vector<int> rows = all_rows(n);
  if (fraction >= 1.0) return rows;
  const auto k = static_cast<std::size_t>(std::max<double>(1.0, std::floor(fraction * static_cast<double>(n))));
  rng::Stream s(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(s.below(rows.size() - i));
    std::swap(rows[i], rows[j]);
  }
  rows.resize(k);
  std::sort(rows.begin(), rows.end());
  return rows;
}

double mean_loss(const LossKind& loss, const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += loss(y(i) - pred(i));
  return y.size() > 0 ? s / static_cast<double>(y.size()) : 0.0;
}

double leaf_step(const LossKind& loss, std::vector<double> r) {
  switch (loss.kind) {
    case LossKind::Kind::Squared: return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    case LossKind::Kind::Absolute: return median_of(std::move(r));
    case LossKind::Kind::Huber: {
      const double med = median_of(r);
      double s = 0.0;
      for (double v : r) s += std::clamp(v - med, -loss.delta, loss.delta);
      return med + s / static_cast<double>(r.size());
    }
  }
  return 0.0;
}

double base_score(const LossKind& loss, const Eigen::VectorXd& y) {
  if (loss.kind == LossKind::Kind::Squared) return y.mean();
  return median_of(std::vector<double>(y.data(), y.data() + y.size()));
}

FitDiagnostics make_diag(const Dataset& data) {
  FitDiagnostics d;
  d.n = static_cast<int>(data.rows());
  d.d = static_cast<int>(data.cols());
  return d;
}

void require_rows(const Dataset& data, const ModelSpec& spec) {
  if (data.rows() < 2) throw DataError("boosting needs at least 2 training rows");
  spec.validate();
}

}  // namespace

TrainedModel fit_random_forest(const Dataset& data, const ModelSpec& spec) {
  data.validate();
  if (spec.family != Family::RandomForest) throw ConfigError("fit_random_forest needs a random_forest spec");
  spec.validate();
  const auto& h = spec.hp;
  TreeGrowOptions opt;
  opt.criterion = spec.loss.kind == LossKind::Kind::Absolute ? SplitCriterion::Absolute : SplitCriterion::Squared;
  opt.max_depth = h.max_depth;
  opt.min_leaf = h.min_leaf;

  const auto n = data.rows();
  TreeEnsembleParams p;
  p.tree_scale = 1.0 / h.n_trees;
  for (int t = 0; t < h.n_trees; ++t) {
    const std::uint64_t tseed = rng::derive(spec.seed, {static_cast<std::uint64_t>(t)});
    std::vector<int> rows;
    if (h.bootstrap) {
      rng::Stream s(rng::derive(tseed, {0}));
      rows.resize(static_cast<std::size_t>(n));
      for (auto& r : rows) r = static_cast<int>(s.below(static_cast<std::uint64_t>(n)));
    } else {
      rows = all_rows(n);
    }
    const FeatureSampler sampler = name_keyed_sampler(rng::derive(tseed, {1}), data.feature_names, h.feature_fraction);
    p.trees.push_back(grow_cart(data.features, data.targets, std::move(rows), opt, sampler));
  }
  FitDiagnostics d = make_diag(data);
  d.iterations = h.n_trees;
  return TrainedModel(spec, data.feature_names, std::move(p), std::move(d));
}

Eigen::VectorXd pseudo_residuals(const LossKind& loss, const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  Eigen::VectorXd r = y - pred;
  switch (loss.kind) {
    case LossKind::Kind::Squared: break;
    case LossKind::Kind::Absolute:
      for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = r(i) > 0 ? 1.0 : (r(i) < 0 ? -1.0 : 0.0);
      break;
    case LossKind::Kind::Huber:
      for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = std::clamp(r(i), -loss.delta, loss.delta);
      break;
  }
  return r;
}

TrainedModel fit_gbdt(const Dataset& data, const ModelSpec& spec) {
  data.validate();
  if (spec.family != Family::Gbdt) throw ConfigError("fit_gbdt needs a gbdt spec");
  require_rows(data, spec);
  const auto& h = spec.hp;
  const auto& x = data.features;
  const auto& y = data.targets;
  const auto n = data.rows();

  TreeEnsembleParams p;
  p.base_score = base_score(spec.loss, y);
  p.tree_scale = h.learning_rate;
  Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, p.base_score);
  FitDiagnostics d = make_diag(data);

  TreeGrowOptions opt;
  opt.criterion = SplitCriterion::Squared;
  opt.max_depth = h.max_depth;
  opt.min_leaf = h.min_leaf;
  for (int m = 0; m < h.n_trees; ++m) {
    const std::uint64_t sseed = rng::derive(spec.seed, {static_cast<std::uint64_t>(m)});
    const Eigen::VectorXd g = pseudo_residuals(spec.loss, y, pred);
    std::vector<int> rows = stage_rows(n, h.subsample, rng::derive(sseed, {0}));
    if (static_cast<int>(rows.size()) < 2 * h.min_leaf) rows = all_rows(n);
    const FeatureSampler sampler = name_keyed_sampler(rng::derive(sseed, {1}), data.feature_names, h.feature_fraction);
    Tree tree = grow_cart(x, g, rows, opt, sampler);

    Eigen::RowVectorXd row(x.cols());
    std::vector<std::vector<double>> by_leaf(tree.nodes.size());
    for (int r : rows) {
      row = x.row(r);
      by_leaf[static_cast<std::size_t>(tree.leaf_index(row.data()))].push_back(y(r) - pred(r));
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      if (tree.nodes[k].feature < 0 && !by_leaf[k].empty()) tree.nodes[k].value = leaf_step(spec.loss, std::move(by_leaf[k]));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      row = x.row(i);
      pred(i) += h.learning_rate * tree.predict(row.data());
    }
    p.trees.push_back(std::move(tree));
    d.stage_loss.push_back(mean_loss(spec.loss, y, pred));
  }
  d.iterations = h.n_trees;
  return TrainedModel(spec, data.feature_names, std::move(p), std::move(d));
}

double xgb_leaf_weight(double g_sum, double h_sum, double lambda) { return -g_sum / (h_sum + lambda); }

double xgb_split_gain(double g_left, double h_left, double g_right, double h_right, double lambda, double gamma) {
  const double g = g_left + g_right;
  const double hs = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) - g * g / (hs + lambda)) -
         gamma;
}

SplitChoice xgb_best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
                           std::span<const int> rows, std::span<const int> features, double lambda, double gamma,
                           double min_child_weight) {
  SplitChoice best;
  const int m = static_cast<int>(rows.size());
  if (m < 2) return best;
  double g_tot = 0.0, h_tot = 0.0;
  for (int r : rows) {
    g_tot += g(r);
    h_tot += h(r);
  }
  std::vector<int> order(rows.begin(), rows.end());
  for (int f : features) {
    const auto col = x.col(f);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return col(a) < col(b) || (col(a) == col(b) && a < b); });
    double gl = 0.0, hl = 0.0;
    for (int i = 1; i < m; ++i) {
      const int prev = order[static_cast<std::size_t>(i - 1)];
      gl += g(prev);
      hl += h(prev);
      const double a = col(prev);
      const double b = col(order[static_cast<std::size_t>(i)]);
      if (!(a < b)) continue;
      if (hl < min_child_weight || h_tot - hl < min_child_weight) continue;
      const double gain = xgb_split_gain(gl, hl, g_tot - gl, h_tot - hl, lambda, gamma);
      if (gain > best.gain) {
        const double mid = a + (b - a) / 2.0;
        best = {f, mid >= b ? a : mid, gain, i};
      }
    }
  }
  return best;
}

namespace {

Tree grow_xgb_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& hess,
                   std::vector<int> rows, const Hyperparams& h, const FeatureSampler& sampler) {
  std::vector<int> all_features(static_cast<std::size_t>(x.cols()));
  std::iota(all_features.begin(), all_features.end(), 0);
  double g2 = 0.0;
  for (int r : rows) g2 += g(r) * g(r);
  const double tol = 1e-12 * g2;

  Tree tree;
  struct Pending {
    int node;
    std::vector<int> rows;
    int depth;
    std::uint64_t key;
  };
  std::vector<Pending> stack;
  tree.nodes.push_back({});
  stack.push_back({0, std::move(rows), 0, 1});
  while (!stack.empty()) {
    Pending p = std::move(stack.back());
    stack.pop_back();
    double gs = 0.0, hs = 0.0;
    for (int r : p.rows) {
      gs += g(r);
      hs += hess(r);
    }
    auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
    node.n_samples = static_cast<int>(p.rows.size());
    node.value = xgb_leaf_weight(gs, hs, h.lambda_leaf);
    if (p.depth >= h.max_depth) continue;
    const std::vector<int> features = sampler ? sampler(p.key) : all_features;
    const SplitChoice s =
        xgb_best_split(x, g, hess, p.rows, features, h.lambda_leaf, h.gamma_complexity, h.min_child_weight);
    if (s.feature < 0 || !(s.gain > tol)) continue;
    std::vector<int> left, right;
    for (int r : p.rows) (x(r, s.feature) <= s.threshold ? left : right).push_back(r);
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    auto& parent = tree.nodes[static_cast<std::size_t>(p.node)];
    parent.feature = s.feature;
    parent.threshold = s.threshold;
    parent.left = li;
    parent.right = li + 1;
    stack.push_back({li + 1, std::move(right), p.depth + 1, rng::derive(p.key, {2})});
    stack.push_back({li, std::move(left), p.depth + 1, rng::derive(p.key, {1})});
  }
  return tree;
}

TrainedModel fit_xgb_linear(const Dataset& data, const ModelSpec& spec) {
  const auto& h = spec.hp;
  const auto& x = data.features;
  const auto& y = data.targets;
  const auto n = data.rows();
  const auto dcols = data.cols();
  const double nn = static_cast<double>(n);

  Eigen::VectorXd mu = x.colwise().mean().transpose();
  Eigen::VectorXd sd(dcols);
  Eigen::MatrixXd z(n, dcols);
  for (Eigen::Index j = 0; j < dcols; ++j) {
    z.col(j) = x.col(j).array() - mu(j);
    sd(j) = std::sqrt(z.col(j).squaredNorm() / nn);
    if (sd(j) > 0) z.col(j) /= sd(j);
  }
  Eigen::VectorXd zz(dcols);
  for (Eigen::Index j = 0; j < dcols; ++j) zz(j) = z.col(j).squaredNorm();

  double bias = 0.0;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dcols);
  Eigen::VectorXd g = -y;  // pred - y with pred = 0
  FitDiagnostics diag = make_diag(data);
  for (int round = 0; round < h.n_trees; ++round) {
    const double db = -h.learning_rate * g.sum() / nn;
    bias += db;
    g.array() += db;
    for (Eigen::Index j = 0; j < dcols; ++j) {
      if (!(sd(j) > 0)) continue;
      const double dw = -h.learning_rate * (g.dot(z.col(j)) + h.lambda_leaf * w(j)) / (zz(j) + h.lambda_leaf);
      w(j) += dw;
      g += dw * z.col(j);
    }
    Eigen::VectorXd pred = g + y;
    diag.stage_loss.push_back(mean_loss(LossKind::squared(), y, pred));
  }
  diag.iterations = h.n_trees;

  LinearParams lp;
  lp.coef = Eigen::VectorXd::Zero(dcols);
  lp.intercept = bias;
  for (Eigen::Index j = 0; j < dcols; ++j) {
    if (!(sd(j) > 0)) continue;
    lp.coef(j) = w(j) / sd(j);
    lp.intercept -= lp.coef(j) * mu(j);
  }
  return TrainedModel(spec, data.feature_names, std::move(lp), std::move(diag));
}

}  // namespace

TrainedModel fit_xgb(const Dataset& data, XgbBase base, const ModelSpec& spec) {
  data.validate();
  const Family want = base == XgbBase::Tree ? Family::XgbTree : Family::XgbLinear;
  if (spec.family != want) throw ConfigError("fit_xgb: spec family does not match the requested base learner");
  require_rows(data, spec);
  if (base == XgbBase::Linear) return fit_xgb_linear(data, spec);

  const auto& h = spec.hp;
  const auto& x = data.features;
  const auto& y = data.targets;
  const auto n = data.rows();
  TreeEnsembleParams p;
  p.base_score = y.mean();
  p.tree_scale = h.learning_rate;
  Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, p.base_score);
  const Eigen::VectorXd hess = Eigen::VectorXd::Ones(n);
  FitDiagnostics d = make_diag(data);
  Eigen::RowVectorXd row(x.cols());
  for (int m = 0; m < h.n_trees; ++m) {
    const std::uint64_t sseed = rng::derive(spec.seed, {static_cast<std::uint64_t>(m)});
    const Eigen::VectorXd g = pred - y;
    std::vector<int> rows = stage_rows(n, h.subsample, rng::derive(sseed, {0}));
    const FeatureSampler sampler = name_keyed_sampler(rng::derive(sseed, {1}), data.feature_names, h.feature_fraction);
    Tree tree = grow_xgb_tree(x, g, hess, std::move(rows), h, sampler);
    for (Eigen::Index i = 0; i < n; ++i) {
      row = x.row(i);
      pred(i) += h.learning_rate * tree.predict(row.data());
    }
    p.trees.push_back(std::move(tree));
    d.stage_loss.push_back(mean_loss(LossKind::squared(), y, pred));
  }
  d.iterations = h.n_trees;
  return TrainedModel(spec, data.feature_names, std::move(p), std::move(d));
}

}  // namespace macrocast
