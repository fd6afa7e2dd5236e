#pragma once

#include "ivcate/cate_model.hpp"
#include "ivcate/crossfit.hpp"

#include <json.hpp>

#include <optional>

namespace ivcate {

// labels y_res / gamma, weights gamma^2 with gamma = h - p; |gamma| < 1e-9 gets weight 0.
WeightedTarget dmliv_reduction(const Residuals& res);

CateModel fit_dmliv(const IvDataset& data, const NuisanceSet& nuisances, const HypothesisSpace& space,
                    const LearnerSpec& learner);

// Empirical L1 loss: mean of (y_res - theta * gamma)^2.
double dmliv_loss(const Vector& theta, const Residuals& res);

struct OverlapDiagnostics {
  double v_min = 0.0;
  double v_p05 = 0.0;
  double v_mean = 0.0;
  std::optional<double> lambda_min;  // min eigenvalue of mean V phi phi'
  bool weak = false;
};

OverlapDiagnostics overlap_diagnostic(const NuisanceSet& nuisances, const Matrix& x, const HypothesisSpace& space);

void to_json(nlohmann::json& j, const OverlapDiagnostics& d);

}  // namespace ivcate
