#include "macrocast/learners/dataset.hpp"

#include <cmath>
#include <unordered_set>

#include "macrocast/error.hpp"

namespace macrocast {

void Dataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) throw DataError("dataset needs at least one row and one column");
  if (targets.size() != features.rows()) throw DataError("dataset targets do not match feature rows");
  if (static_cast<Eigen::Index>(feature_names.size()) != features.cols()) {
    throw DataError("dataset feature names do not match columns");
  }
  std::unordered_set<std::string> seen;
  for (const auto& n : feature_names) {
    if (!seen.insert(n).second) throw DataError("duplicate feature name '" + n + "'");
  }
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (!std::isfinite(targets(i))) throw DataError("non-finite target in row " + std::to_string(i));
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      if (!std::isfinite(features(i, j))) {
        throw DataError("non-finite feature '" + feature_names[j] + "' in row " + std::to_string(i));
      }
    }
  }
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  Dataset out;
  out.feature_names = feature_names;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.targets(static_cast<Eigen::Index>(i)) = targets(rows[i]);
  }
  return out;
}

double LossKind::operator()(double r) const {
  switch (kind) {
    case Kind::Squared: return r * r;
    case Kind::Absolute: return std::abs(r);
    case Kind::Huber: {
      const double a = std::abs(r);
      return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
    }
  }
  return r * r;
}

std::string LossKind::name() const {
  switch (kind) {
    case Kind::Squared: return "SE";
    case Kind::Absolute: return "AE";
    case Kind::Huber: return "HUBER";
  }
  return "SE";
}

LossKind LossKind::parse(std::string_view s) {
  std::string v(s);
  for (char& c : v) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (v == "SE" || v == "SQUARED") return squared();
  if (v == "AE" || v == "ABSOLUTE") return absolute();
  if (v == "HUBER") return huber();
  throw ConfigError("unknown loss '" + std::string(s) + "' (SE | AE | HUBER)");
}

}  // namespace macrocast
