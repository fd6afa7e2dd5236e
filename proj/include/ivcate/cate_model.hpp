#pragma once

#include "ivcate/learners.hpp"
#include "ivcate/types.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ivcate {

enum class SpaceKind { constant, linear, linear_subset, tree_ensemble, lasso_linear };

struct HypothesisSpace {
  SpaceKind kind = SpaceKind::linear;
  std::vector<Index> subset;  // linear_subset only

  // constant | linear | linear_subset=i,j,... | forest | lasso
  static HypothesisSpace parse(const std::string& text);
  std::string to_string() const;
  bool is_parametric() const {
    return kind == SpaceKind::constant || kind == SpaceKind::linear || kind == SpaceKind::linear_subset;
  }
  // Columns of X entering the linear design (empty for constant / nonlinear spaces).
  std::vector<Index> columns(Index d) const;
  bool operator==(const HypothesisSpace&) const = default;
};

// Design [1, X_S] for a parametric space.
Matrix space_design(const HypothesisSpace& space, const Matrix& x);

class CateModel {
 public:
  CateModel() = default;

  static CateModel constant(double value);
  // coefficients: intercept first, then one per column in `columns`.
  static CateModel linear(SpaceKind kind, std::vector<Index> columns, Vector coefficients);
  static CateModel ensemble(FittedModel model);

  SpaceKind kind() const { return kind_; }
  const Vector& coefficients() const { return coef_; }
  const std::vector<Index>& columns() const { return columns_; }
  const FittedModel& learner() const { return model_; }

  Vector predict(const Matrix& x) const;
  std::vector<std::string> coefficient_names(const std::vector<std::string>& column_names) const;
  nlohmann::json to_json(const std::vector<std::string>& column_names = {}) const;

 private:
  SpaceKind kind_ = SpaceKind::constant;
  Vector coef_ = Vector::Zero(1);
  std::vector<Index> columns_;
  FittedModel model_;
};

struct WeightedTarget {
  Vector labels;
  Vector weights;  // empty: unweighted
  Index zero_weight_rows = 0;
};

// Minimizes the (weighted) square loss of labels over the space.
// Parametric spaces use an exact least-squares solve.
CateModel fit_final_stage(const WeightedTarget& target, const Matrix& x, const HypothesisSpace& space,
                          const LearnerSpec& learner);

LearnerSpec default_final_learner(SpaceKind kind);

}  // namespace ivcate
