#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "macrocast/learners/model.hpp"

namespace macrocast {

struct CvRow {
  int index = 0;  // position in the grid
  std::string label;
  double rmse = std::numeric_limits<double>::infinity();
  bool failed = false;
};

struct CvResult {
  ModelSpec best;
  int best_index = 0;
  std::vector<CvRow> table;
};

// Contiguous, unshuffled folds: fold sizes differ by at most one, larger
// folds first.
std::vector<std::pair<int, int>> contiguous_folds(int n, int k);

// Score = RMSE pooled over every held-out prediction. Lowest score wins;
// ties go to the simpler spec (smaller depth, fewer trees, larger penalties),
// then to grid order. A spec whose fit throws scores +inf.
CvResult cross_validate(const Dataset& data, const std::vector<ModelSpec>& grid, int k);

// Cartesian product of `grid` values over `base`, last key varying fastest
// (keys iterate in map order).
std::vector<ModelSpec> expand_grid(const ModelSpec& base, const std::map<std::string, std::vector<nlohmann::json>>& grid);

}  // namespace macrocast
