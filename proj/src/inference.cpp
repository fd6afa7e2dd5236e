#include "ivcate/inference.hpp"

#include "ivcate/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace ivcate {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::argument, "quantile probability must be in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::argument, "confidence level must be in (0, 1)");
  return normal_quantile(0.5 + 0.5 * level);
}

EstimateWithCI EstimateWithCI::make(double point, double std_error, double level, Index n_used) {
  const double z = critical_value(level);
  EstimateWithCI e;
  e.point = point;
  e.std_error = std_error;
  e.ci_low = point - z * std_error;
  e.ci_high = point + z * std_error;
  e.level = level;
  e.n_used = n_used;
  return e;
}

void to_json(nlohmann::json& j, const EstimateWithCI& e) {
  j = nlohmann::json{{"point", e.point},   {"stderr", e.std_error}, {"ci_low", e.ci_low},
                     {"ci_high", e.ci_high}, {"level", e.level},    {"n_used", e.n_used}};
}

EstimateWithCI LinearProjectionResult::coefficient(Index j) const {
  EstimateWithCI e;
  e.point = coefficients[j];
  e.std_error = robust_stderr[j];
  e.ci_low = ci_low[j];
  e.ci_high = ci_high[j];
  e.level = level;
  e.n_used = n_used;
  return e;
}

void to_json(nlohmann::json& j, const LinearProjectionResult& r) {
  j = nlohmann::json::array();
  for (Index k = 0; k < r.coefficients.size(); ++k) {
    nlohmann::json c = r.coefficient(k);
    c["name"] = static_cast<std::size_t>(k) < r.names.size() ? r.names[static_cast<std::size_t>(k)]
                                                              : "c" + std::to_string(k);
    j.push_back(c);
  }
}

namespace {

LinearProjectionResult sandwich(const Vector& y, const Matrix& f_in, const Vector* w, double level,
                                bool add_intercept) {
  if (f_in.rows() != y.size()) fail(ErrorKind::argument, "design and response row counts differ");
  Matrix f = f_in;
  if (add_intercept) {
    f.resize(f_in.rows(), f_in.cols() + 1);
    f.col(0).setOnes();
    f.rightCols(f_in.cols()) = f_in;
  }
  const Index k = f.cols();
  Index n = y.size();
  if (w != nullptr) {
    if (w->size() != y.size()) fail(ErrorKind::argument, "weight length differs from response");
    if ((w->array() < 0.0).any() || !w->array().isFinite().all()) {
      fail(ErrorKind::argument, "weights must be finite and nonnegative");
    }
    n = (w->array() > 0.0).count();
  }
  if (k < 1) fail(ErrorKind::argument, "design has no columns");
  if (k >= n) fail(ErrorKind::argument, "need more rows (" + std::to_string(n) + ") than columns (" + std::to_string(k) + ")");
  if (!f.array().isFinite().all() || !y.array().isFinite().all()) {
    fail(ErrorKind::argument, "non-finite values in regression inputs");
  }

  Vector sw = w ? Vector(w->array().sqrt()) : Vector::Ones(y.size());
  const Matrix fw = f.array().colwise() * sw.array();
  const Vector yw = y.cwiseProduct(sw);

  Eigen::ColPivHouseholderQR<Matrix> qr(fw);
  const Vector rdiag = qr.matrixQR().diagonal().cwiseAbs();
  const double top = rdiag.size() ? rdiag[0] : 0.0;
  Index rank = 0;
  for (Index i = 0; i < rdiag.size(); ++i) {
    if (rdiag[i] > 1e-12 * top && rdiag[i] > 0.0) ++rank;
  }
  if (rank < k) {
    std::string cols;
    for (Index i = rank; i < k; ++i) {
      if (!cols.empty()) cols += ", ";
      const Index c = qr.colsPermutation().indices()[i];
      cols += std::to_string(add_intercept ? c - 1 : c);
      if (add_intercept && c == 0) cols += " (intercept)";
    }
    fail(ErrorKind::collinearity, "design matrix is rank deficient; offending column(s): " + cols);
  }
  LinearProjectionResult out;
  out.coefficients = qr.solve(yw);
  const Vector resid = yw - fw * out.coefficients;  // sqrt(w) * e

  // bread = (F'WF)^-1 via R
  const Matrix r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Matrix rinv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
  const auto& perm = qr.colsPermutation();
  Matrix bread_p = rinv * rinv.transpose();
  Matrix bread = perm * bread_p * perm.transpose();

  // meat = sum w^2 e^2 f f' = sum (sqrt(w) * sqrt(w) e)^2 f f'
  const Vector scale = resid.cwiseProduct(sw);
  const Matrix fe = f.array().colwise() * scale.array();
  const Matrix meat = fe.transpose() * fe;
  const double hc1 = static_cast<double>(n) / static_cast<double>(n - k);
  const Matrix cov = hc1 * bread * meat * bread;

  const double z = critical_value(level);
  out.robust_stderr = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.ci_low = out.coefficients - z * out.robust_stderr;
  out.ci_high = out.coefficients + z * out.robust_stderr;
  out.level = level;
  out.n_used = n;
  return out;
}

}  // namespace

LinearProjectionResult ols_robust(const Vector& y, const Matrix& f, double level, bool add_intercept) {
  return sandwich(y, f, nullptr, level, add_intercept);
}

LinearProjectionResult wls_robust(const Vector& y, const Matrix& f, const Vector& w, double level,
                                  bool add_intercept) {
  return sandwich(y, f, &w, level, add_intercept);
}

}  // namespace ivcate
