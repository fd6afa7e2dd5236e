#pragma once

#include "ivcate/types.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ivcate {

double normal_quantile(double p);

// Two-sided critical value for a confidence level in (0, 1).
double critical_value(double level);

struct EstimateWithCI {
  double point = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  Index n_used = 0;

  static EstimateWithCI make(double point, double std_error, double level, Index n_used);
  bool covers(double value) const { return ci_low <= value && value <= ci_high; }
};

void to_json(nlohmann::json& j, const EstimateWithCI& e);

struct LinearProjectionResult {
  Vector coefficients;
  Vector robust_stderr;
  Vector ci_low;
  Vector ci_high;
  double level = 0.95;
  Index n_used = 0;
  std::vector<std::string> names;

  EstimateWithCI coefficient(Index j) const;
};

void to_json(nlohmann::json& j, const LinearProjectionResult& r);

// Least squares with HC1 sandwich errors. add_intercept prepends a column of ones.
LinearProjectionResult ols_robust(const Vector& y, const Matrix& f, double level, bool add_intercept = false);

// Weighted least squares; sandwich meat uses w^2 e^2. Rows with zero weight are ignored.
LinearProjectionResult wls_robust(const Vector& y, const Matrix& f, const Vector& w, double level,
                                  bool add_intercept = false);

}  // namespace ivcate
