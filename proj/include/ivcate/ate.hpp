#pragma once

#include "ivcate/crossfit.hpp"
#include "ivcate/inference.hpp"

#include <json.hpp>

namespace ivcate {

inline constexpr double kRelevanceThreshold = 1e-10;

struct FirstStage {
  double mean_tz = 0.0;  // mean of t_res * z_res
  double std_error = 0.0;
  double f_stat = 0.0;   // (mean / std_error)^2
  Index n = 0;
};

FirstStage first_stage(const Residuals& res);
void to_json(nlohmann::json& j, const FirstStage& f);

// Throws weak_instrument when |mean(t_res z_res)| <= 1e-10 or the first-stage
// F statistic is below min_f (min_f = 0 disables the second check).
void check_instrument_strength(const FirstStage& fs, double min_f);

EstimateWithCI estimate_dmlateiv(const Residuals& res, double level);

EstimateWithCI estimate_dr_ate(const Vector& y_dr, double level);

}  // namespace ivcate
