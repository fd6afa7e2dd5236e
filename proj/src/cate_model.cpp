#include "ivcate/cate_model.hpp"

#include "ivcate/error.hpp"
#include "ivcate/inference.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace ivcate {

HypothesisSpace HypothesisSpace::parse(const std::string& text) {
  HypothesisSpace s;
  if (text == "constant") {
    s.kind = SpaceKind::constant;
  } else if (text == "linear") {
    s.kind = SpaceKind::linear;
  } else if (text == "forest" || text == "tree_ensemble") {
    s.kind = SpaceKind::tree_ensemble;
  } else if (text == "lasso" || text == "lasso_linear") {
    s.kind = SpaceKind::lasso_linear;
  } else if (text.rfind("linear_subset=", 0) == 0) {
    s.kind = SpaceKind::linear_subset;
    std::stringstream ss(text.substr(14));
    std::string item;
    while (std::getline(ss, item, ',')) {
      Index v = 0;
      auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size() || v < 0) {
        fail(ErrorKind::argument, "bad column index '" + item + "' in linear_subset");
      }
      s.subset.push_back(v);
    }
    if (s.subset.empty()) fail(ErrorKind::argument, "linear_subset needs at least one column");
  } else {
    fail(ErrorKind::argument, "unknown hypothesis space '" + text +
                                  "' (expected constant|linear|linear_subset=<cols>|forest|lasso)");
  }
  return s;
}

std::string HypothesisSpace::to_string() const {
  switch (kind) {
    case SpaceKind::constant: return "constant";
    case SpaceKind::linear: return "linear";
    case SpaceKind::tree_ensemble: return "forest";
    case SpaceKind::lasso_linear: return "lasso";
    case SpaceKind::linear_subset: {
      std::string out = "linear_subset=";
      for (std::size_t i = 0; i < subset.size(); ++i) out += (i ? "," : "") + std::to_string(subset[i]);
      return out;
    }
  }
  return "linear";
}

std::vector<Index> HypothesisSpace::columns(Index d) const {
  std::vector<Index> cols;
  if (kind == SpaceKind::linear || kind == SpaceKind::lasso_linear) {
    for (Index j = 0; j < d; ++j) cols.push_back(j);
  } else if (kind == SpaceKind::linear_subset) {
    for (Index j : subset) {
      if (j >= d) fail(ErrorKind::schema, "linear_subset column " + std::to_string(j) + " out of range (d=" + std::to_string(d) + ")");
      cols.push_back(j);
    }
  }
  return cols;
}

Matrix space_design(const HypothesisSpace& space, const Matrix& x) {
  const auto cols = space.columns(x.cols());
  Matrix f(x.rows(), static_cast<Index>(cols.size()) + 1);
  f.col(0).setOnes();
  for (std::size_t k = 0; k < cols.size(); ++k) f.col(static_cast<Index>(k) + 1) = x.col(cols[k]);
  return f;
}

CateModel CateModel::constant(double value) {
  CateModel m;
  m.kind_ = SpaceKind::constant;
  m.coef_ = Vector::Constant(1, value);
  return m;
}

CateModel CateModel::linear(SpaceKind kind, std::vector<Index> columns, Vector coefficients) {
  if (coefficients.size() != static_cast<Index>(columns.size()) + 1) {
    fail(ErrorKind::internal, "coefficient count does not match the column set");
  }
  CateModel m;
  m.kind_ = kind;
  m.columns_ = std::move(columns);
  m.coef_ = std::move(coefficients);
  return m;
}

CateModel CateModel::ensemble(FittedModel model) {
  CateModel m;
  m.kind_ = SpaceKind::tree_ensemble;
  m.coef_.resize(0);
  m.model_ = std::move(model);
  return m;
}

Vector CateModel::predict(const Matrix& x) const {
  if (kind_ == SpaceKind::tree_ensemble) return model_.predict(x);
  Vector out = Vector::Constant(x.rows(), coef_[0]);
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    if (columns_[k] >= x.cols()) fail(ErrorKind::argument, "CATE model expects more feature columns");
    out += coef_[static_cast<Index>(k) + 1] * x.col(columns_[k]);
  }
  return out;
}

std::vector<std::string> CateModel::coefficient_names(const std::vector<std::string>& column_names) const {
  std::vector<std::string> names{"intercept"};
  for (Index c : columns_) {
    names.push_back(static_cast<std::size_t>(c) < column_names.size() ? column_names[static_cast<std::size_t>(c)]
                                                                      : "x" + std::to_string(c));
  }
  return names;
}

nlohmann::json CateModel::to_json(const std::vector<std::string>& column_names) const {
  nlohmann::json j;
  switch (kind_) {
    case SpaceKind::constant: j["space"] = "constant"; break;
    case SpaceKind::linear: j["space"] = "linear"; break;
    case SpaceKind::linear_subset: j["space"] = "linear_subset"; break;
    case SpaceKind::lasso_linear: j["space"] = "lasso"; break;
    case SpaceKind::tree_ensemble: j["space"] = "forest"; break;
  }
  if (kind_ == SpaceKind::tree_ensemble) {
    j["model"] = model_.to_json();
    const Vector imp = model_.feature_importance();
    nlohmann::json importance = nlohmann::json::array();
    for (Index k = 0; k < imp.size(); ++k) {
      importance.push_back({{"feature", static_cast<std::size_t>(k) < column_names.size()
                                             ? column_names[static_cast<std::size_t>(k)]
                                             : "x" + std::to_string(k)},
                            {"importance", imp[k]}});
    }
    j["feature_importance"] = importance;
  } else {
    j["columns"] = columns_;
    j["names"] = coefficient_names(column_names);
    j["coefficients"] = std::vector<double>(coef_.data(), coef_.data() + coef_.size());
  }
  return j;
}

LearnerSpec default_final_learner(SpaceKind kind) {
  if (kind == SpaceKind::lasso_linear) {
    LearnerSpec s = LearnerSpec::make(LearnerKind::lasso);
    s.relative_lambda = false;
    return s;
  }
  return LearnerSpec::make(LearnerKind::shallow_forest);
}

CateModel fit_final_stage(const WeightedTarget& target, const Matrix& x, const HypothesisSpace& space,
                          const LearnerSpec& learner) {
  const Index n = target.labels.size();
  if (x.rows() != n) fail(ErrorKind::internal, "final-stage labels and features differ in length");
  const bool weighted = target.weights.size() > 0;
  if (weighted && target.weights.size() != n) fail(ErrorKind::internal, "final-stage weights length mismatch");
  if (weighted && !(target.weights.sum() > 0.0)) {
    fail(ErrorKind::no_identification, "instrument has no effect anywhere in-sample (all final-stage weights are zero)");
  }
  if (!target.labels.array().isFinite().all()) fail(ErrorKind::numerical, "non-finite final-stage labels");

  switch (space.kind) {
    case SpaceKind::constant: {
      const double v = weighted ? target.weights.dot(target.labels) / target.weights.sum() : target.labels.mean();
      return CateModel::constant(v);
    }
    case SpaceKind::linear:
    case SpaceKind::linear_subset: {
      const Matrix f = space_design(space, x);
      Vector coef;
      if (weighted) {
        coef = wls_robust(target.labels, f, target.weights, 0.95).coefficients;
      } else {
        coef = ols_robust(target.labels, f, 0.95).coefficients;
      }
      return CateModel::linear(space.kind, space.columns(x.cols()), coef);
    }
    case SpaceKind::lasso_linear: {
      // lambda = c / sqrt(n), c chosen by cross-validation
      LearnerSpec s = learner.kind == LearnerKind::lasso ? learner : default_final_learner(SpaceKind::lasso_linear);
      s.relative_lambda = false;
      s.poly_degree = 1;
      const Index n_eff = weighted ? (target.weights.array() > 0.0).count() : n;
      const double root = std::sqrt(static_cast<double>(n_eff));
      std::vector<double> c_grid = s.lambda_grid.empty() ? std::vector<double>{0.01, 0.03, 0.1, 0.3, 1.0, 3.0}
                                                         : s.lambda_grid;
      s.lambda_grid.clear();
      for (double c : c_grid) s.lambda_grid.push_back(c / root);
      // The penalty acts on weighted mean loss; normalize weights so the scale matches c / sqrt(n).
      Vector w = weighted ? Vector(target.weights * (static_cast<double>(n_eff) / target.weights.sum())) : Vector();
      const FittedModel m = fit_regressor(s, x, target.labels, w);
      const Vector intercept_probe = m.predict(Matrix::Zero(1, x.cols()));
      Vector coef(x.cols() + 1);
      coef[0] = intercept_probe[0];
      for (Index j = 0; j < x.cols(); ++j) {
        Matrix e = Matrix::Zero(1, x.cols());
        e(0, j) = 1.0;
        coef[j + 1] = m.predict(e)[0] - coef[0];
      }
      return CateModel::linear(SpaceKind::lasso_linear, space.columns(x.cols()), coef);
    }
    case SpaceKind::tree_ensemble: {
      const LearnerSpec s = (learner.kind == LearnerKind::shallow_forest || learner.kind == LearnerKind::gbt_regressor)
                                ? learner
                                : default_final_learner(SpaceKind::tree_ensemble);
      return CateModel::ensemble(fit_regressor(s, x, target.labels, weighted ? target.weights : Vector()));
    }
  }
  fail(ErrorKind::internal, "unknown hypothesis space");
}

}  // namespace ivcate
