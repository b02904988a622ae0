#include "macrocast/learners/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "macrocast/error.hpp"
#include "macrocast/rng.hpp"

namespace macrocast {

namespace {

// Sum of absolute deviations from the median, maintained under insertion.
class RunningAbsDev {
 public:
  void push(double v) {
    if (lo_.empty() || v <= lo_.top()) {
      lo_.push(v);
      sum_lo_ += v;
    } else {
      hi_.push(v);
      sum_hi_ += v;
    }
    if (lo_.size() > hi_.size() + 1) {
      const double t = lo_.top();
      lo_.pop();
      sum_lo_ -= t;
      hi_.push(t);
      sum_hi_ += t;
    } else if (hi_.size() > lo_.size()) {
      const double t = hi_.top();
      hi_.pop();
      sum_hi_ -= t;
      lo_.push(t);
      sum_lo_ += t;
    }
  }
  double value() const {
    if (lo_.empty()) return 0.0;
    const double m = lo_.top();
    return (sum_hi_ - static_cast<double>(hi_.size()) * m) + (static_cast<double>(lo_.size()) * m - sum_lo_);
  }

 private:
  std::priority_queue<double> lo_;
  std::priority_queue<double, std::vector<double>, std::greater<>> hi_;
  double sum_lo_ = 0.0;
  double sum_hi_ = 0.0;
};

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m >= b ? a : m;
}

double node_impurity(const Eigen::VectorXd& y, std::span<const int> rows, SplitCriterion c) {
  if (rows.empty()) return 0.0;
  if (c == SplitCriterion::Squared) {
    double mean = 0.0;
    for (int r : rows) mean += y(r);
    mean /= static_cast<double>(rows.size());
    double s = 0.0;
    for (int r : rows) s += (y(r) - mean) * (y(r) - mean);
    return s;
  }
  std::vector<double> v;
  v.reserve(rows.size());
  for (int r : rows) v.push_back(y(r));
  const double m = median_of(v);
  double s = 0.0;
  for (double t : v) s += std::abs(t - m);
  return s;
}

double leaf_value(const Eigen::VectorXd& y, std::span<const int> rows, SplitCriterion c) {
  if (rows.empty()) return 0.0;
  if (c == SplitCriterion::Squared) {
    double s = 0.0;
    for (int r : rows) s += y(r);
    return s / static_cast<double>(rows.size());
  }
  std::vector<double> v;
  v.reserve(rows.size());
  for (int r : rows) v.push_back(y(r));
  return median_of(std::move(v));
}

}  // namespace

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

SplitChoice cart_best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::span<const int> rows,
                            std::span<const int> features, SplitCriterion criterion, int min_leaf) {
  SplitChoice best;
  const int m = static_cast<int>(rows.size());
  if (m < 2 * std::max(1, min_leaf)) return best;
  min_leaf = std::max(1, min_leaf);

  double parent_mean = 0.0;
  for (int r : rows) parent_mean += y(r);
  parent_mean /= m;
  const double parent = node_impurity(y, rows, criterion);

  std::vector<int> order(rows.begin(), rows.end());
  std::vector<double> prefix(static_cast<std::size_t>(m) + 1), suffix(static_cast<std::size_t>(m) + 1);
  for (int f : features) {
    const auto col = x.col(f);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return col(a) < col(b) || (col(a) == col(b) && a < b); });
    if (criterion == SplitCriterion::Squared) {
      // Centered targets: SSE(parent) - SSE(L) - SSE(R) = S_L^2 / n_L + S_R^2 / n_R with S_R = -S_L.
      double s_left = 0.0;
      for (int i = 1; i < m; ++i) {
        s_left += y(order[static_cast<std::size_t>(i - 1)]) - parent_mean;
        if (i < min_leaf || m - i < min_leaf) continue;
        const double a = col(order[static_cast<std::size_t>(i - 1)]);
        const double b = col(order[static_cast<std::size_t>(i)]);
        if (!(a < b)) continue;
        const double gain = s_left * s_left * (1.0 / i + 1.0 / (m - i));
        if (gain > best.gain) best = {f, midpoint(a, b), gain, i};
      }
    } else {
      RunningAbsDev acc;
      prefix[0] = 0.0;
      for (int i = 0; i < m; ++i) {
        acc.push(y(order[static_cast<std::size_t>(i)]));
        prefix[static_cast<std::size_t>(i) + 1] = acc.value();
      }
      RunningAbsDev rev;
      suffix[static_cast<std::size_t>(m)] = 0.0;
      for (int i = m - 1; i >= 0; --i) {
        rev.push(y(order[static_cast<std::size_t>(i)]));
        suffix[static_cast<std::size_t>(i)] = rev.value();
      }
      for (int i = min_leaf; i <= m - min_leaf; ++i) {
        const double a = col(order[static_cast<std::size_t>(i - 1)]);
        const double b = col(order[static_cast<std::size_t>(i)]);
        if (!(a < b)) continue;
        const double gain = parent - prefix[static_cast<std::size_t>(i)] - suffix[static_cast<std::size_t>(i)];
        if (gain > best.gain) best = {f, midpoint(a, b), gain, i};
      }
    }
  }
  return best;
}

Tree grow_cart(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int> rows, const TreeGrowOptions& opt,
               const FeatureSampler& sampler) {
  Tree tree;
  std::vector<int> all_features(static_cast<std::size_t>(x.cols()));
  std::iota(all_features.begin(), all_features.end(), 0);

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
    auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
    node.n_samples = static_cast<int>(p.rows.size());
    node.value = leaf_value(y, p.rows, opt.criterion);
    if (p.depth >= opt.max_depth) continue;

    const double impurity = node_impurity(y, p.rows, opt.criterion);
    double scale = 0.0;
    for (int r : p.rows) scale += opt.criterion == SplitCriterion::Squared ? y(r) * y(r) : std::abs(y(r));
    if (!(impurity > 1e-20 * scale)) continue;
    const std::vector<int> features = sampler ? sampler(p.key) : all_features;
    const SplitChoice s = cart_best_split(x, y, p.rows, features, opt.criterion, opt.min_leaf);
    if (s.feature < 0 || !(s.gain > 1e-12 * impurity)) continue;

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

FeatureSampler name_keyed_sampler(std::uint64_t seed, const std::vector<std::string>& names, double fraction) {
  const int d = static_cast<int>(names.size());
  const int k = std::clamp(static_cast<int>(std::ceil(fraction * d - 1e-12)), 1, d);
  std::vector<std::uint64_t> name_keys;
  name_keys.reserve(names.size());
  for (const auto& n : names) name_keys.push_back(rng::hash_string(n));
  std::vector<int> by_name(static_cast<std::size_t>(d));
  std::iota(by_name.begin(), by_name.end(), 0);
  std::sort(by_name.begin(), by_name.end(), [&](int a, int b) { return names[static_cast<std::size_t>(a)] < names[static_cast<std::size_t>(b)]; });
  std::vector<int> rank(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) rank[static_cast<std::size_t>(by_name[static_cast<std::size_t>(i)])] = i;
  return [seed, k, d, name_keys = std::move(name_keys), by_name = std::move(by_name), rank = std::move(rank)](std::uint64_t node_key) {
    if (k >= d) return by_name;
    std::vector<int> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::uint64_t> prio(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) prio[static_cast<std::size_t>(j)] = rng::derive(seed, {node_key, name_keys[static_cast<std::size_t>(j)]});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
      return prio[static_cast<std::size_t>(a)] < prio[static_cast<std::size_t>(b)];
    });
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)]; });
    return idx;
  };
}

TrainedModel fit_tree(const Dataset& data, const LossKind& criterion, int max_depth, int min_leaf) {
  data.validate();
  if (criterion.kind == LossKind::Kind::Huber) throw ConfigError("tree criterion must be SE or AE");
  if (max_depth < 1 || min_leaf < 1) throw ConfigError("max_depth and min_leaf must be >= 1");
  TreeGrowOptions opt;
  opt.criterion = criterion.kind == LossKind::Kind::Absolute ? SplitCriterion::Absolute : SplitCriterion::Squared;
  opt.max_depth = max_depth;
  opt.min_leaf = min_leaf;
  std::vector<int> rows(static_cast<std::size_t>(data.rows()));
  std::iota(rows.begin(), rows.end(), 0);

  TreeEnsembleParams p;
  p.trees.push_back(grow_cart(data.features, data.targets, std::move(rows), opt, name_keyed_sampler(0, data.feature_names, 1.0)));
  p.tree_scale = 1.0;

  ModelSpec spec;
  spec.family = Family::RandomForest;
  spec.loss = criterion;
  spec.hp.n_trees = 1;
  spec.hp.max_depth = max_depth;
  spec.hp.min_leaf = min_leaf;
  spec.hp.bootstrap = false;
  spec.hp.feature_fraction = 1.0;
  FitDiagnostics diag;
  diag.n = static_cast<int>(data.rows());
  diag.d = static_cast<int>(data.cols());
  return TrainedModel(spec, data.feature_names, std::move(p), diag);
}

}  // namespace macrocast
