#include "ivcate/dmliv.hpp"

#include "ivcate/error.hpp"

#include <algorithm>
#include <cmath>

namespace ivcate {

WeightedTarget dmliv_reduction(const Residuals& res) {
  const Index n = res.y_res.size();
  if (res.z_pi_res.size() != n) fail(ErrorKind::internal, "residual lengths differ");
  WeightedTarget out;
  out.labels.resize(n);
  out.weights.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double g = res.z_pi_res[i];
    if (std::abs(g) < 1e-9) {
      out.labels[i] = 0.0;
      out.weights[i] = 0.0;
      ++out.zero_weight_rows;
    } else {
      out.labels[i] = res.y_res[i] / g;
      out.weights[i] = g * g;
    }
  }
  return out;
}

CateModel fit_dmliv(const IvDataset& data, const NuisanceSet& nuisances, const HypothesisSpace& space,
                    const LearnerSpec& learner) {
  const Residuals res = compute_residuals(data, nuisances);
  return fit_final_stage(dmliv_reduction(res), data.x, space, learner);
}

double dmliv_loss(const Vector& theta, const Residuals& res) {
  return (res.y_res - theta.cwiseProduct(res.z_pi_res)).squaredNorm() / static_cast<double>(theta.size());
}

OverlapDiagnostics overlap_diagnostic(const NuisanceSet& nuisances, const Matrix& x, const HypothesisSpace& space) {
  OverlapDiagnostics d;
  const Index n = nuisances.v.size();
  if (n == 0) return d;
  std::vector<double> v(nuisances.v.data(), nuisances.v.data() + n);
  std::sort(v.begin(), v.end());
  d.v_min = v.front();
  d.v_p05 = v[static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(n - 1)))];
  d.v_mean = nuisances.v.mean();
  if (space.is_parametric()) {
    const Matrix phi = space_design(space, x);
    const Matrix m = phi.transpose() * (phi.array().colwise() * nuisances.v.array()).matrix() / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
    d.lambda_min = eig.eigenvalues().minCoeff();
    d.weak = *d.lambda_min < 1e-6;
  } else {
    d.weak = d.v_mean < 1e-6;
  }
  return d;
}

void to_json(nlohmann::json& j, const OverlapDiagnostics& d) {
  j = nlohmann::json{{"v_min", d.v_min}, {"v_p05", d.v_p05}, {"v_mean", d.v_mean}, {"weak", d.weak}};
  if (d.lambda_min) {
    j["lambda_min"] = *d.lambda_min;
  } else {
    j["lambda_min"] = nullptr;
  }
}

}  // namespace ivcate
