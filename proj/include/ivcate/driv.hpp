#pragma once

#include "ivcate/cate_model.hpp"
#include "ivcate/crossfit.hpp"

#include <optional>

namespace ivcate {

struct PseudoOutcome {
  Vector y_dr;
  Index clip_count = 0;
  double beta_min = 0.0;
};

// 0.01 * median |beta|, floored at 1e-6.
double default_beta_min(const Vector& beta);

// y_dr = theta_pre + (y_res - theta_pre t_res) z_res / beta_c,
// beta_c = sign(beta) max(|beta|, beta_min).
PseudoOutcome driv_pseudo_outcome(const Residuals& res, const NuisanceSet& nuisances,
                                  std::optional<double> beta_min = std::nullopt);

CateModel fit_driv(const PseudoOutcome& y_dr, const Matrix& x, const HypothesisSpace& space,
                   const LearnerSpec& learner);

// Weights beta^2, labels theta_pre + (y_res - theta_pre t_res) z_res / beta; |beta| < 1e-12 gets weight 0.
WeightedTarget driv_rw_target(const Residuals& res, const NuisanceSet& nuisances);

CateModel fit_driv_rw(const Residuals& res, const NuisanceSet& nuisances, const Matrix& x,
                      const HypothesisSpace& space, const LearnerSpec& learner);

// Weights V^2, labels theta_pre + (y_res - theta_pre t_res) z_pi_res / V; V < 1e-12 gets weight 0.
WeightedTarget projected_driv_rw_target(const Residuals& res, const NuisanceSet& nuisances);

CateModel fit_projected_driv_rw(const Residuals& res, const NuisanceSet& nuisances, const Matrix& x,
                                const HypothesisSpace& space, const LearnerSpec& learner);

}  // namespace ivcate
