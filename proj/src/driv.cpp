#include "ivcate/driv.hpp"

#include "ivcate/error.hpp"

#include <algorithm>
#include <cmath>

namespace ivcate {

namespace {

const Vector& require_theta_pre(const NuisanceSet& ns) {
  if (!ns.theta_pre) fail(ErrorKind::configuration, "preliminary CATE (theta_pre) is missing from the nuisance set");
  if (ns.theta_pre->size() != ns.n()) fail(ErrorKind::internal, "theta_pre length mismatch");
  return *ns.theta_pre;
}

}  // namespace

double default_beta_min(const Vector& beta) {
  if (beta.size() == 0) return 1e-6;
  std::vector<double> a(static_cast<std::size_t>(beta.size()));
  for (Index i = 0; i < beta.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(beta[i]);
  const std::size_t mid = a.size() / 2;
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
  double median = a[mid];
  if (a.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return std::max(0.01 * median, 1e-6);
}

PseudoOutcome driv_pseudo_outcome(const Residuals& res, const NuisanceSet& ns, std::optional<double> beta_min) {
  const Vector& pre = require_theta_pre(ns);
  const Index n = ns.n();
  if (res.y_res.size() != n) fail(ErrorKind::internal, "residuals and nuisances are not aligned");
  PseudoOutcome po;
  po.beta_min = beta_min ? *beta_min : default_beta_min(ns.beta);
  if (!(po.beta_min > 0.0)) fail(ErrorKind::argument, "beta_min must be positive");
  po.y_dr.resize(n);
  for (Index i = 0; i < n; ++i) {
    double b = ns.beta[i];
    if (std::abs(b) < po.beta_min) {
      b = (b < 0.0 ? -1.0 : 1.0) * po.beta_min;
      ++po.clip_count;
    }
    po.y_dr[i] = pre[i] + (res.y_res[i] - pre[i] * res.t_res[i]) * res.z_res[i] / b;
  }
  if (!po.y_dr.array().isFinite().all()) fail(ErrorKind::numerical, "non-finite pseudo-outcomes");
  return po;
}

CateModel fit_driv(const PseudoOutcome& y_dr, const Matrix& x, const HypothesisSpace& space,
                   const LearnerSpec& learner) {
  WeightedTarget target;
  target.labels = y_dr.y_dr;
  return fit_final_stage(target, x, space, learner);
}

WeightedTarget driv_rw_target(const Residuals& res, const NuisanceSet& ns) {
  const Vector& pre = require_theta_pre(ns);
  const Index n = ns.n();
  WeightedTarget t;
  t.labels.resize(n);
  t.weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double b = ns.beta[i];
    if (std::abs(b) < 1e-12) {
      t.labels[i] = 0.0;
      t.weights[i] = 0.0;
      ++t.zero_weight_rows;
    } else {
      t.labels[i] = pre[i] + (res.y_res[i] - pre[i] * res.t_res[i]) * res.z_res[i] / b;
      t.weights[i] = b * b;
    }
  }
  return t;
}

CateModel fit_driv_rw(const Residuals& res, const NuisanceSet& ns, const Matrix& x, const HypothesisSpace& space,
                      const LearnerSpec& learner) {
  return fit_final_stage(driv_rw_target(res, ns), x, space, learner);
}

WeightedTarget projected_driv_rw_target(const Residuals& res, const NuisanceSet& ns) {
  const Vector& pre = require_theta_pre(ns);
  const Index n = ns.n();
  WeightedTarget t;
  t.labels.resize(n);
  t.weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double v = ns.v[i];
    if (!(v > kVFloor)) {
      t.labels[i] = 0.0;
      t.weights[i] = 0.0;
      ++t.zero_weight_rows;
    } else {
      t.labels[i] = pre[i] + (res.y_res[i] - pre[i] * res.t_res[i]) * res.z_pi_res[i] / v;
      t.weights[i] = v * v;
    }
  }
  return t;
}

CateModel fit_projected_driv_rw(const Residuals& res, const NuisanceSet& ns, const Matrix& x,
                                const HypothesisSpace& space, const LearnerSpec& learner) {
  return fit_final_stage(projected_driv_rw_target(res, ns), x, space, learner);
}

}  // namespace ivcate
