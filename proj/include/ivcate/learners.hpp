#pragma once

#include "ivcate/types.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace ivcate {

enum class LearnerKind { ols, ridge, lasso, logistic_l2, gbt_regressor, gbt_classifier, shallow_forest };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& text);
bool is_classifier(LearnerKind kind);

inline constexpr double kProbabilityClip = 1e-6;

struct LearnerSpec {
  LearnerKind kind = LearnerKind::ridge;

  // Linear and logistic models. Features are standardized before the penalty
  // is applied; the intercept is never penalized.
  double lambda = 1.0;
  std::vector<double> lambda_grid;  // nonempty: lambda chosen by cv_folds-fold CV
  bool relative_lambda = false;     // lasso: lambda as a fraction of lambda_max
  int cv_folds = 3;
  int poly_degree = 1;              // 2 adds pairwise products and squares
  double tolerance = 1e-7;
  int max_sweeps = 10000;

  // Tree ensembles.
  int n_trees = 100;
  int max_depth = 6;
  double learning_rate = 0.1;
  double min_child_weight = 20.0;
  double gamma = 0.1;
  double reg_lambda = 1.0;
  double validation_fraction = 0.1;
  int early_stopping_rounds = 10;
  bool scale_to_n = true;  // scale min_child_weight by n / 4.6e6 (floor 1)
  int min_leaf = 0;        // shallow_forest; 0: max(50, n / 50)
  int max_bins = 256;

  std::uint64_t seed = 0;

  bool operator==(const LearnerSpec&) const = default;

  void validate() const;

  // Text form "kind" or "kind:key=value,key=value"; lists use '/'.
  static LearnerSpec parse(const std::string& text);
  std::string to_string() const;

  static LearnerSpec make(LearnerKind kind);
};

void to_json(nlohmann::json& j, const LearnerSpec& spec);

namespace detail {

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Vector predict(const Matrix& x) const = 0;
  virtual Vector importance(Index d) const { return Vector::Zero(d); }
  virtual nlohmann::json to_json() const = 0;
};

}  // namespace detail

class FittedModel {
 public:
  FittedModel() = default;
  FittedModel(LearnerSpec spec, Index feature_dim, bool classifier,
              std::shared_ptr<const detail::Predictor> impl)
      : spec_(std::move(spec)), feature_dim_(feature_dim), classifier_(classifier), impl_(std::move(impl)) {}

  bool valid() const { return impl_ != nullptr; }
  const LearnerSpec& spec() const { return spec_; }
  Index feature_dim() const { return feature_dim_; }
  bool classifier() const { return classifier_; }

  Vector predict(const Matrix& x) const;
  // Split-gain importance normalized to sum 1; zeros for non-tree models.
  Vector feature_importance() const;
  nlohmann::json to_json() const;

  FittedModel with_spec(LearnerSpec spec) const {
    FittedModel m = *this;
    m.spec_ = std::move(spec);
    return m;
  }

 private:
  LearnerSpec spec_;
  Index feature_dim_ = 0;
  bool classifier_ = false;
  std::shared_ptr<const detail::Predictor> impl_;
};

// Empty weights mean unit weights.
FittedModel fit_regressor(const LearnerSpec& spec, const Matrix& x, const Vector& y,
                          const Vector& weights = Vector());

FittedModel fit_classifier(const LearnerSpec& spec, const Matrix& x, const Vector& y);

// Mean over folds of the fold RMSE (regression) or log-loss (classification).
std::vector<double> cv_loss_table(const std::vector<LearnerSpec>& grid, const Matrix& x, const Vector& y,
                                  int k, std::uint64_t seed = 0, bool classification = false,
                                  const Vector& weights = Vector());

LearnerSpec cross_validate(const std::vector<LearnerSpec>& grid, const Matrix& x, const Vector& y, int k,
                           std::uint64_t seed = 0, bool classification = false,
                           const Vector& weights = Vector());

}  // namespace ivcate
