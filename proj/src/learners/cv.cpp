#include "macrocast/learners/cv.hpp"

#include <cmath>
#include <tuple>

#include "macrocast/error.hpp"

namespace macrocast {

std::vector<std::pair<int, int>> contiguous_folds(int n, int k) {
  if (n < 2) throw DataError("cross-validation needs at least 2 rows");
  if (k < 2) throw ConfigError("cross-validation needs k >= 2");
  k = std::min(k, n);
  std::vector<std::pair<int, int>> folds;
  const int base = n / k;
  const int extra = n % k;
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    folds.emplace_back(start, start + size);
    start += size;
  }
  return folds;
}

namespace {

auto simplicity(const ModelSpec& s) {
  const auto& h = s.hp;
  return std::make_tuple(h.max_depth, h.n_trees, -h.lambda, -h.lambda_leaf, -h.gamma_complexity);
}

}  // namespace

CvResult cross_validate(const Dataset& data, const std::vector<ModelSpec>& grid, int k) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid");
  data.validate();
  const int n = static_cast<int>(data.rows());
  const auto folds = contiguous_folds(n, k);

  CvResult out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CvRow row;
    row.index = static_cast<int>(g);
    row.label = grid[g].label();
    try {
      double sse = 0.0;
      for (const auto& [lo, hi] : folds) {
        std::vector<int> train;
        train.reserve(static_cast<std::size_t>(n - (hi - lo)));
        for (int i = 0; i < n; ++i) {
          if (i < lo || i >= hi) train.push_back(i);
        }
        const TrainedModel m = fit_model(grid[g], data.subset(train));
        for (int i = lo; i < hi; ++i) {
          const Eigen::RowVectorXd xr = data.features.row(i);
          const double e = data.targets(i) - m.predict(std::span<const double>(xr.data(), static_cast<std::size_t>(xr.size())));
          sse += e * e;
        }
      }
      row.rmse = std::sqrt(sse / n);
      if (!std::isfinite(row.rmse)) throw NumericalError("non-finite CV score");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error&) {
      row.failed = true;
      row.rmse = std::numeric_limits<double>::infinity();
    }
    out.table.push_back(row);
  }

  int best = -1;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto& r = out.table[g];
    if (r.failed) continue;
    if (best < 0) {
      best = static_cast<int>(g);
      continue;
    }
    const double b = out.table[static_cast<std::size_t>(best)].rmse;
    const double tol = 1e-12 * std::max(std::abs(b), std::abs(r.rmse));
    if (r.rmse < b - tol) {
      best = static_cast<int>(g);
    } else if (std::abs(r.rmse - b) <= tol && simplicity(grid[g]) < simplicity(grid[static_cast<std::size_t>(best)])) {
      best = static_cast<int>(g);
    }
  }
  if (best < 0) throw NumericalError("every candidate in the hyperparameter grid failed to fit");
  out.best_index = best;
  out.best = grid[static_cast<std::size_t>(best)];
  return out;
}

std::vector<ModelSpec> expand_grid(const ModelSpec& base, const std::map<std::string, std::vector<nlohmann::json>>& grid) {
  std::vector<ModelSpec> out{base};
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw ConfigError("grid for '" + name + "' has no values");
    std::vector<ModelSpec> next;
    next.reserve(out.size() * values.size());
    for (const auto& s : out) {
      for (const auto& v : values) {
        ModelSpec c = s;
        set_hyperparam(c.hp, c.loss, name, v);
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  for (const auto& s : out) s.validate();
  return out;
}

}  // namespace macrocast
