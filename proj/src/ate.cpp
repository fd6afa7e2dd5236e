#include "ivcate/ate.hpp"

#include "ivcate/dataset.hpp"
#include "ivcate/error.hpp"

#include <cmath>

namespace ivcate {

namespace {

double sample_sd(const Vector& v) {
  const Index n = v.size();
  if (n < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(n - 1));
}

}  // namespace

FirstStage first_stage(const Residuals& res) {
  const Vector tz = res.t_res.cwiseProduct(res.z_res);
  FirstStage f;
  f.n = tz.size();
  f.mean_tz = tz.mean();
  f.std_error = sample_sd(tz) / std::sqrt(static_cast<double>(f.n));
  f.f_stat = f.std_error > 0.0 ? (f.mean_tz / f.std_error) * (f.mean_tz / f.std_error)
                               : (f.mean_tz != 0.0 ? INFINITY : 0.0);
  return f;
}

void to_json(nlohmann::json& j, const FirstStage& f) {
  j = nlohmann::json{{"mean_tz", f.mean_tz}, {"stderr", f.std_error}, {"f_stat", f.f_stat}, {"n", f.n}};
}

void check_instrument_strength(const FirstStage& fs, double min_f) {
  if (!(std::abs(fs.mean_tz) > kRelevanceThreshold)) {
    fail(ErrorKind::weak_instrument, "instrument relevance violated: |mean(T_res * Z_res)| = " +
                                         format_double(std::abs(fs.mean_tz)) + " <= 1e-10");
  }
  if (min_f > 0.0 && fs.f_stat < min_f) {
    fail(ErrorKind::weak_instrument, "weak instrument: first-stage F = " + format_double(fs.f_stat) +
                                         " is below the threshold " + format_double(min_f) +
                                         " (set min_first_stage_f = 0 to proceed anyway)");
  }
}

EstimateWithCI estimate_dmlateiv(const Residuals& res, double level) {
  const Index n = res.y_res.size();
  if (res.t_res.size() != n || res.z_res.size() != n) fail(ErrorKind::internal, "residual lengths differ");
  const Vector tz = res.t_res.cwiseProduct(res.z_res);
  const double denom = tz.mean();
  if (!(std::abs(denom) > kRelevanceThreshold)) {
    fail(ErrorKind::weak_instrument, "instrument relevance violated: |mean(T_res * Z_res)| = " +
                                         format_double(std::abs(denom)) + " <= 1e-10");
  }
  const double theta = res.y_res.dot(res.z_res) / tz.sum();
  const Vector psi = ((res.y_res - theta * res.t_res).cwiseProduct(res.z_res)) / denom;
  return EstimateWithCI::make(theta, sample_sd(psi) / std::sqrt(static_cast<double>(n)), level, n);
}

EstimateWithCI estimate_dr_ate(const Vector& y_dr, double level) {
  if (y_dr.size() < 2) fail(ErrorKind::argument, "need at least 2 pseudo-outcomes");
  if (!y_dr.array().isFinite().all()) fail(ErrorKind::argument, "pseudo-outcomes must be finite");
  const Index n = y_dr.size();
  if (y_dr.minCoeff() == y_dr.maxCoeff()) return EstimateWithCI::make(y_dr[0], 0.0, level, n);
  return EstimateWithCI::make(y_dr.mean(), sample_sd(y_dr) / std::sqrt(static_cast<double>(n)), level, n);
}

}  // namespace ivcate
