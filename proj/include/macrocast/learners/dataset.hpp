#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

namespace macrocast {

// Supervised design: row i of `features` predicts targets(i).
struct Dataset {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd targets;   // n
  std::vector<std::string> feature_names;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }

  // Throws DataError unless n >= 1, d >= 1, names are unique and match d,
  // and every cell is finite.
  void validate() const;
  Dataset subset(const std::vector<int>& rows) const;
};

// Loss used by boosting, tree criteria and ensemble weighting.
struct LossKind {
  enum class Kind { Squared, Absolute, Huber };
  Kind kind = Kind::Squared;
  double delta = 1.35;  // Huber threshold

  static LossKind squared() { return {Kind::Squared, 1.35}; }
  static LossKind absolute() { return {Kind::Absolute, 1.35}; }
  static LossKind huber(double delta = 1.35) { return {Kind::Huber, delta}; }

  double operator()(double residual) const;
  std::string name() const;  // "SE", "AE", "HUBER"
  static LossKind parse(std::string_view s);
  friend bool operator==(const LossKind&, const LossKind&) = default;
};

}  // namespace macrocast
