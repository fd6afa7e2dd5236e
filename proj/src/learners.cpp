#include "ivcate/learners.hpp"

#include "ivcate/dataset.hpp"
#include "ivcate/error.hpp"
#include "linear_models.hpp"
#include "trees.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace ivcate {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::ols: return "ols";
    case LearnerKind::ridge: return "ridge";
    case LearnerKind::lasso: return "lasso";
    case LearnerKind::logistic_l2: return "logistic_l2";
    case LearnerKind::gbt_regressor: return "gbt_regressor";
    case LearnerKind::gbt_classifier: return "gbt_classifier";
    case LearnerKind::shallow_forest: return "shallow_forest";
  }
  return "ridge";
}

LearnerKind parse_learner_kind(const std::string& text) {
  for (auto k : {LearnerKind::ols, LearnerKind::ridge, LearnerKind::lasso, LearnerKind::logistic_l2,
                 LearnerKind::gbt_regressor, LearnerKind::gbt_classifier, LearnerKind::shallow_forest}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorKind::argument, "unknown learner kind '" + text + "'");
}

bool is_classifier(LearnerKind kind) {
  return kind == LearnerKind::logistic_l2 || kind == LearnerKind::gbt_classifier;
}

LearnerSpec LearnerSpec::make(LearnerKind kind) {
  LearnerSpec s;
  s.kind = kind;
  switch (kind) {
    case LearnerKind::ols: s.lambda = 0.0; break;
    case LearnerKind::lasso:
      s.lambda = 0.01;
      s.relative_lambda = true;
      break;
    case LearnerKind::shallow_forest:
      s.n_trees = 200;
      s.max_depth = 1;
      break;
    default: break;
  }
  return s;
}

void LearnerSpec::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::argument, "invalid learner spec: " + m); };
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) bad("lambda must be finite and >= 0");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) bad("lambda_grid entries must be finite and >= 0");
  }
  if (cv_folds < 2) bad("cv_folds must be >= 2");
  if (poly_degree != 1 && poly_degree != 2) bad("poly_degree must be 1 or 2");
  if (!(tolerance > 0.0)) bad("tolerance must be > 0");
  if (max_sweeps < 1) bad("max_sweeps must be >= 1");
  if (n_trees < 1) bad("n_trees must be >= 1");
  if (max_depth < 1 || max_depth > 30) bad("max_depth must be in [1, 30]");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) bad("learning_rate must be in (0, 1]");
  if (!(min_child_weight >= 0.0)) bad("min_child_weight must be >= 0");
  if (!(gamma >= 0.0)) bad("gamma must be >= 0");
  if (!(reg_lambda >= 0.0)) bad("reg_lambda must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) bad("validation_fraction must be in [0, 1)");
  if (early_stopping_rounds < 0) bad("early_stopping_rounds must be >= 0");
  if (min_leaf < 0) bad("min_leaf must be >= 0");
  if (max_bins < 2 || max_bins > 65535) bad("max_bins must be in [2, 65535]");
}

namespace {

double parse_number(const std::string& key, const std::string& v) {
  double out = 0.0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) fail(ErrorKind::argument, "learner option '" + key + "': bad number '" + v + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_number(key, v);
  if (d != std::floor(d) || std::abs(d) > 2e9) fail(ErrorKind::argument, "learner option '" + key + "' must be an integer");
  return static_cast<int>(d);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::argument, "learner option '" + key + "' must be true or false");
}

std::string join_grid(const std::vector<double>& g) {
  std::string out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) out += '/';
    out += format_double(g[i]);
  }
  return out;
}

}  // namespace

LearnerSpec LearnerSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  LearnerSpec s = make(parse_learner_kind(text.substr(0, colon)));
  if (colon == std::string::npos) return s;
  std::stringstream options(text.substr(colon + 1));
  std::string item;
  while (std::getline(options, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorKind::argument, "learner option '" + item + "' lacks '='");
    const std::string key = item.substr(0, eq);
    const std::string v = item.substr(eq + 1);
    if (key == "lambda") s.lambda = parse_number(key, v);
    else if (key == "lambda_grid") {
      s.lambda_grid.clear();
      std::stringstream gs(v);
      std::string g;
      while (std::getline(gs, g, '/')) s.lambda_grid.push_back(parse_number(key, g));
    } else if (key == "relative_lambda") s.relative_lambda = parse_bool(key, v);
    else if (key == "cv_folds") s.cv_folds = parse_int(key, v);
    else if (key == "poly_degree") s.poly_degree = parse_int(key, v);
    else if (key == "tolerance") s.tolerance = parse_number(key, v);
    else if (key == "max_sweeps") s.max_sweeps = parse_int(key, v);
    else if (key == "n_trees") s.n_trees = parse_int(key, v);
    else if (key == "max_depth") s.max_depth = parse_int(key, v);
    else if (key == "learning_rate") s.learning_rate = parse_number(key, v);
    else if (key == "min_child_weight") s.min_child_weight = parse_number(key, v);
    else if (key == "gamma") s.gamma = parse_number(key, v);
    else if (key == "reg_lambda") s.reg_lambda = parse_number(key, v);
    else if (key == "validation_fraction") s.validation_fraction = parse_number(key, v);
    else if (key == "early_stopping_rounds") s.early_stopping_rounds = parse_int(key, v);
    else if (key == "scale_to_n") s.scale_to_n = parse_bool(key, v);
    else if (key == "min_leaf") s.min_leaf = parse_int(key, v);
    else if (key == "max_bins") s.max_bins = parse_int(key, v);
    else if (key == "seed") {
      std::uint64_t seed = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
      if (ec != std::errc() || p != v.data() + v.size()) fail(ErrorKind::argument, "learner option 'seed' must be an unsigned integer");
      s.seed = seed;
    } else fail(ErrorKind::argument, "unknown learner option '" + key + "'");
  }
  s.validate();
  return s;
}

std::string LearnerSpec::to_string() const {
  const LearnerSpec d = make(kind);
  std::vector<std::string> parts;
  auto num = [&](const char* key, double a, double b) {
    if (a != b) parts.push_back(std::string(key) + "=" + format_double(a));
  };
  auto boolean = [&](const char* key, bool a, bool b) {
    if (a != b) parts.push_back(std::string(key) + "=" + (a ? "true" : "false"));
  };
  num("lambda", lambda, d.lambda);
  if (!lambda_grid.empty()) parts.push_back("lambda_grid=" + join_grid(lambda_grid));
  boolean("relative_lambda", relative_lambda, d.relative_lambda);
  num("cv_folds", cv_folds, d.cv_folds);
  num("poly_degree", poly_degree, d.poly_degree);
  num("tolerance", tolerance, d.tolerance);
  num("max_sweeps", max_sweeps, d.max_sweeps);
  num("n_trees", n_trees, d.n_trees);
  num("max_depth", max_depth, d.max_depth);
  num("learning_rate", learning_rate, d.learning_rate);
  num("min_child_weight", min_child_weight, d.min_child_weight);
  num("gamma", gamma, d.gamma);
  num("reg_lambda", reg_lambda, d.reg_lambda);
  num("validation_fraction", validation_fraction, d.validation_fraction);
  num("early_stopping_rounds", early_stopping_rounds, d.early_stopping_rounds);
  boolean("scale_to_n", scale_to_n, d.scale_to_n);
  num("min_leaf", min_leaf, d.min_leaf);
  num("max_bins", max_bins, d.max_bins);
  if (seed != d.seed) parts.push_back("seed=" + std::to_string(seed));
  std::string out = ivcate::to_string(kind);
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : ":") + parts[i];
  return out;
}

void to_json(nlohmann::json& j, const LearnerSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)}, {"spec", spec.to_string()}};
  if (!is_classifier(spec.kind) && spec.kind != LearnerKind::gbt_regressor && spec.kind != LearnerKind::shallow_forest) {
    j["lambda"] = spec.lambda;
  } else if (spec.kind == LearnerKind::logistic_l2) {
    j["lambda"] = spec.lambda;
  } else {
    j["learning_rate"] = spec.learning_rate;
    j["n_trees"] = spec.n_trees;
    j["max_depth"] = spec.max_depth;
  }
}

Vector FittedModel::predict(const Matrix& x) const {
  if (!impl_) fail(ErrorKind::internal, "predict called on an unfitted model");
  if (x.cols() != feature_dim_) {
    fail(ErrorKind::argument, "model expects " + std::to_string(feature_dim_) + " features, got " +
                                  std::to_string(x.cols()));
  }
  return impl_->predict(x);
}

Vector FittedModel::feature_importance() const {
  if (!impl_) fail(ErrorKind::internal, "feature_importance called on an unfitted model");
  return impl_->importance(feature_dim_);
}

nlohmann::json FittedModel::to_json() const {
  nlohmann::json j = impl_ ? impl_->to_json() : nlohmann::json::object();
  j["learner"] = spec_.to_string();
  j["feature_dim"] = feature_dim_;
  return j;
}

FittedModel fit_regressor(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& weights) {
  spec.validate();
  switch (spec.kind) {
    case LearnerKind::ols:
    case LearnerKind::ridge:
    case LearnerKind::lasso:
      return detail::fit_linear(spec, x, y, weights);
    case LearnerKind::gbt_regressor:
      return detail::fit_gbt(spec, x, y, weights, false);
    case LearnerKind::shallow_forest:
      return detail::fit_forest(spec, x, y, weights);
    case LearnerKind::logistic_l2:
    case LearnerKind::gbt_classifier:
      break;
  }
  fail(ErrorKind::argument, "learner '" + to_string(spec.kind) + "' is a classifier; use fit_classifier");
}

FittedModel fit_classifier(const LearnerSpec& spec, const Matrix& x, const Vector& y) {
  spec.validate();
  if (!is_classifier(spec.kind)) {
    fail(ErrorKind::argument, "learner '" + to_string(spec.kind) + "' is not a classifier");
  }
  if (x.rows() != y.size()) fail(ErrorKind::argument, "X and y row counts differ");
  Index ones = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) fail(ErrorKind::argument, "classifier labels must be 0 or 1");
    ones += y[i] == 1.0;
  }
  if (ones == 0 || ones == y.size()) {
    const double p = ones == 0 ? kProbabilityClip : 1.0 - kProbabilityClip;
    return FittedModel(spec, x.cols(), true, std::make_shared<detail::ConstantPredictor>(p));
  }
  if (!spec.lambda_grid.empty() && spec.kind == LearnerKind::logistic_l2) {
    std::vector<LearnerSpec> grid;
    for (double l : spec.lambda_grid) {
      LearnerSpec s = spec;
      s.lambda = l;
      s.lambda_grid.clear();
      grid.push_back(s);
    }
    LearnerSpec best = cross_validate(grid, x, y, spec.cv_folds, spec.seed, true);
    LearnerSpec resolved = spec;
    resolved.lambda = best.lambda;
    return detail::fit_logistic(best, x, y, Vector()).with_spec(resolved);
  }
  if (spec.kind == LearnerKind::logistic_l2) return detail::fit_logistic(spec, x, y, Vector());
  return detail::fit_gbt(spec, x, y, Vector(), true);
}

std::vector<double> cv_loss_table(const std::vector<LearnerSpec>& grid, const Matrix& x, const Vector& y, int k,
                                  std::uint64_t seed, bool classification, const Vector& weights) {
  if (grid.empty()) fail(ErrorKind::argument, "cross-validation grid is empty");
  if (k < 2) fail(ErrorKind::argument, "cross-validation needs k >= 2");
  if (k > x.rows()) fail(ErrorKind::argument, "cross-validation folds exceed the sample size");
  const SplitPlan plan = make_splits(x.rows(), k, seed);
  std::vector<double> table;
  for (const auto& spec : grid) {
    double total = 0.0;
    for (int f = 0; f < k; ++f) {
      const auto train = plan.train_rows(f);
      const auto test = plan.test_rows(f);
      Matrix xt(static_cast<Index>(train.size()), x.cols());
      Vector yt(static_cast<Index>(train.size()));
      Vector wt(weights.size() ? static_cast<Index>(train.size()) : 0);
      for (std::size_t i = 0; i < train.size(); ++i) {
        xt.row(static_cast<Index>(i)) = x.row(train[i]);
        yt[static_cast<Index>(i)] = y[train[i]];
        if (weights.size()) wt[static_cast<Index>(i)] = weights[train[i]];
      }
      Matrix xv(static_cast<Index>(test.size()), x.cols());
      for (std::size_t i = 0; i < test.size(); ++i) xv.row(static_cast<Index>(i)) = x.row(test[i]);
      const FittedModel m = classification ? fit_classifier(spec, xt, yt) : fit_regressor(spec, xt, yt, wt);
      const Vector pred = m.predict(xv);
      double loss = 0.0, sw = 0.0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const double w = weights.size() ? weights[test[i]] : 1.0;
        const double yi = y[test[i]];
        const double pi = pred[static_cast<Index>(i)];
        if (classification) {
          loss -= w * (yi * std::log(pi) + (1.0 - yi) * std::log(1.0 - pi));
        } else {
          loss += w * (yi - pi) * (yi - pi);
        }
        sw += w;
      }
      if (sw > 0.0) total += classification ? loss / sw : std::sqrt(loss / sw);
    }
    table.push_back(total / k);
  }
  return table;
}

LearnerSpec cross_validate(const std::vector<LearnerSpec>& grid, const Matrix& x, const Vector& y, int k,
                           std::uint64_t seed, bool classification, const Vector& weights) {
  if (grid.size() == 1) {
    if (k < 2 || k > x.rows()) fail(ErrorKind::argument, "cross-validation needs 2 <= k <= n");
    return grid.front();
  }
  const auto table = cv_loss_table(grid, x, y, k, seed, classification, weights);
  std::size_t best = 0;
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (table[i] < table[best]) best = i;
  }
  return grid[best];
}

}  // namespace ivcate
