#pragma once

#include "ivcate/learners.hpp"

#include <utility>
#include <vector>

namespace ivcate::detail {

// Degree-2 expansion: original columns, then x_i * x_j for i <= j
// (squares of two-valued columns are skipped).
struct PolyMap {
  Index d = 0;
  int degree = 1;
  std::vector<std::pair<Index, Index>> pairs;

  static PolyMap fit(const Matrix& x, int degree);
  Index width() const { return d + static_cast<Index>(pairs.size()); }
  Matrix expand(const Matrix& x) const;
  nlohmann::json to_json() const;
};

// Weighted sufficient statistics of [1, x - shift] and y.
struct LinearStats {
  Matrix m;  // sum w a a'
  Vector v;  // sum w a y
  double syy = 0.0;

  static LinearStats compute(const Matrix& x, const Vector& y, const Vector& w, const Vector& shift,
                             const std::vector<Index>* rows = nullptr);
  LinearStats minus(const LinearStats& other) const;
  double weight() const { return m(0, 0); }
};

struct LinearSolution {
  double intercept = 0.0;  // in raw coordinates
  Vector coef;
};

LinearSolution solve_linear(const LinearStats& stats, const Vector& shift, const LearnerSpec& spec,
                            double lambda);

// Weighted SSE of a raw-coordinate solution from fold statistics.
double linear_sse(const LinearStats& stats, const Vector& shift, const LinearSolution& sol);

class LinearPredictor : public Predictor {
 public:
  LinearPredictor(PolyMap poly, LinearSolution sol, bool logistic)
      : poly_(std::move(poly)), sol_(std::move(sol)), logistic_(logistic) {}
  Vector predict(const Matrix& x) const override;
  nlohmann::json to_json() const override;
  const LinearSolution& solution() const { return sol_; }

 private:
  PolyMap poly_;
  LinearSolution sol_;
  bool logistic_;
};

class ConstantPredictor : public Predictor {
 public:
  explicit ConstantPredictor(double value) : value_(value) {}
  Vector predict(const Matrix& x) const override { return Vector::Constant(x.rows(), value_); }
  nlohmann::json to_json() const override { return {{"type", "constant"}, {"value", value_}}; }

 private:
  double value_;
};

FittedModel fit_linear(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w);
FittedModel fit_logistic(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w);

}  // namespace ivcate::detail
