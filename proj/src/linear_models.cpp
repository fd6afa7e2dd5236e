#include "linear_models.hpp"

#include "ivcate/dataset.hpp"
#include "ivcate/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ivcate::detail {

PolyMap PolyMap::fit(const Matrix& x, int degree) {
  if (degree != 1 && degree != 2) fail(ErrorKind::argument, "poly_degree must be 1 or 2");
  PolyMap map;
  map.d = x.cols();
  map.degree = degree;
  if (degree == 2) {
    std::vector<bool> two_valued(static_cast<std::size_t>(x.cols()));
    for (Index j = 0; j < x.cols(); ++j) {
      std::set<double> distinct;
      for (Index i = 0; i < x.rows() && distinct.size() <= 2; ++i) distinct.insert(x(i, j));
      two_valued[static_cast<std::size_t>(j)] = distinct.size() <= 2;
    }
    for (Index i = 0; i < x.cols(); ++i) {
      for (Index j = i; j < x.cols(); ++j) {
        if (i == j && two_valued[static_cast<std::size_t>(i)]) continue;
        map.pairs.emplace_back(i, j);
      }
    }
  }
  return map;
}

Matrix PolyMap::expand(const Matrix& x) const {
  if (x.cols() != d) {
    fail(ErrorKind::argument, "model expects " + std::to_string(d) + " features, got " + std::to_string(x.cols()));
  }
  if (pairs.empty()) return x;
  Matrix out(x.rows(), width());
  out.leftCols(d) = x;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out.col(d + static_cast<Index>(k)) = x.col(pairs[k].first).cwiseProduct(x.col(pairs[k].second));
  }
  return out;
}

nlohmann::json PolyMap::to_json() const {
  nlohmann::json p = nlohmann::json::array();
  for (const auto& [a, b] : pairs) p.push_back({a, b});
  return {{"degree", degree}, {"products", p}};
}

LinearStats LinearStats::compute(const Matrix& x, const Vector& y, const Vector& w, const Vector& shift,
                                 const std::vector<Index>* rows) {
  const Index p = x.cols();
  const Index m = rows ? static_cast<Index>(rows->size()) : x.rows();
  Matrix a(m, p + 1);
  Vector wy(m);
  Vector ww(m);
  for (Index k = 0; k < m; ++k) {
    const Index i = rows ? (*rows)[static_cast<std::size_t>(k)] : k;
    a(k, 0) = 1.0;
    a.row(k).tail(p) = x.row(i) - shift.transpose();
    ww[k] = w.size() ? w[i] : 1.0;
    wy[k] = y[i];
  }
  LinearStats s;
  const Matrix aw = a.array().colwise() * ww.array();
  s.m = aw.transpose() * a;
  s.v = aw.transpose() * wy;
  s.syy = (ww.array() * wy.array().square()).sum();
  return s;
}

LinearStats LinearStats::minus(const LinearStats& other) const {
  LinearStats s;
  s.m = m - other.m;
  s.v = v - other.v;
  s.syy = syy - other.syy;
  return s;
}

LinearSolution solve_linear(const LinearStats& stats, const Vector& shift, const LearnerSpec& spec,
                            double lambda) {
  const Index p = stats.m.rows() - 1;
  const double w = stats.weight();
  if (!(w > 0.0)) fail(ErrorKind::argument, "sum of weights must be positive");
  const Vector mu = stats.m.col(0).tail(p) / w;
  const double ybar = stats.v[0] / w;
  const Matrix cov = stats.m.bottomRightCorner(p, p) / w - mu * mu.transpose();
  const Vector cxy = stats.v.tail(p) / w - mu * ybar;

  std::vector<Index> active;
  for (Index j = 0; j < p; ++j) {
    const double second = stats.m(j + 1, j + 1) / w;
    if (cov(j, j) > 1e-13 * second && cov(j, j) > 1e-300) {
      active.push_back(j);
    } else if (spec.kind == LearnerKind::ols) {
      fail(ErrorKind::numerical, "singular design: feature " + std::to_string(j) +
                                     " is constant (collinear with the intercept); use ridge with lambda > 0");
    }
  }
  const Index q = static_cast<Index>(active.size());
  Vector sd(q);
  Matrix g(q, q);
  Vector c(q);
  for (Index a = 0; a < q; ++a) sd[a] = std::sqrt(cov(active[a], active[a]));
  for (Index a = 0; a < q; ++a) {
    c[a] = cxy[active[a]] / sd[a];
    for (Index b = 0; b < q; ++b) g(a, b) = cov(active[a], active[b]) / (sd[a] * sd[b]);
  }

  Vector beta = Vector::Zero(q);
  if (q > 0) {
    switch (spec.kind) {
      case LearnerKind::ols: {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 1e-12 * hi)) {
          fail(ErrorKind::numerical, "singular design matrix in ols (condition number above 1e12); use ridge with lambda > 0");
        }
        beta = g.ldlt().solve(c);
        break;
      }
      case LearnerKind::ridge: {
        Matrix a = g;
        a.diagonal().array() += lambda;
        Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success) fail(ErrorKind::numerical, "ridge system is not positive definite");
        beta = llt.solve(c);
        break;
      }
      case LearnerKind::lasso: {
        const double lam = spec.relative_lambda ? lambda * c.cwiseAbs().maxCoeff() : lambda;
        bool converged = false;
        for (int sweep = 0; sweep < spec.max_sweeps; ++sweep) {
          double change = 0.0;
          for (Index j = 0; j < q; ++j) {
            const double rho = c[j] - g.row(j).dot(beta) + g(j, j) * beta[j];
            double next = 0.0;
            if (rho > lam) next = (rho - lam) / g(j, j);
            if (rho < -lam) next = (rho + lam) / g(j, j);
            change = std::max(change, std::abs(next - beta[j]));
            beta[j] = next;
          }
          if (change < spec.tolerance) {
            converged = true;
            break;
          }
        }
        if (!converged) fail(ErrorKind::numerical, "lasso coordinate descent did not converge");
        break;
      }
      default:
        fail(ErrorKind::internal, "solve_linear called for a non-linear learner");
    }
  }

  LinearSolution sol;
  sol.coef = Vector::Zero(p);
  for (Index a = 0; a < q; ++a) sol.coef[active[a]] = beta[a] / sd[a];
  const double centered_intercept = ybar - mu.dot(sol.coef);
  sol.intercept = centered_intercept - shift.dot(sol.coef);
  return sol;
}

double linear_sse(const LinearStats& stats, const Vector& shift, const LinearSolution& sol) {
  const Index p = sol.coef.size();
  Vector theta(p + 1);
  theta[0] = sol.intercept + shift.dot(sol.coef);
  theta.tail(p) = sol.coef;
  const double sse = stats.syy - 2.0 * theta.dot(stats.v) + theta.dot(stats.m * theta);
  return std::max(0.0, sse);
}

Vector LinearPredictor::predict(const Matrix& x) const {
  const Matrix xe = poly_.expand(x);
  Vector eta = (xe * sol_.coef).array() + sol_.intercept;
  if (!logistic_) return eta;
  for (Index i = 0; i < eta.size(); ++i) {
    const double pr = 1.0 / (1.0 + std::exp(-eta[i]));
    eta[i] = std::clamp(pr, kProbabilityClip, 1.0 - kProbabilityClip);
  }
  return eta;
}

nlohmann::json LinearPredictor::to_json() const {
  return {{"type", logistic_ ? "logistic" : "linear"},
          {"intercept", sol_.intercept},
          {"coefficients", std::vector<double>(sol_.coef.data(), sol_.coef.data() + sol_.coef.size())},
          {"expansion", poly_.to_json()}};
}

namespace {

void check_inputs(const Matrix& x, const Vector& y, const Vector& w) {
  if (x.rows() != y.size()) fail(ErrorKind::argument, "X and y row counts differ");
  if (x.rows() == 0) fail(ErrorKind::argument, "cannot fit on zero rows");
  if (!x.array().isFinite().all() || !y.array().isFinite().all()) {
    fail(ErrorKind::argument, "non-finite values in learner inputs");
  }
  if (w.size()) {
    if (w.size() != y.size()) fail(ErrorKind::argument, "weight length differs from y");
    if (!w.array().isFinite().all() || (w.array() < 0.0).any()) {
      fail(ErrorKind::argument, "weights must be finite and nonnegative");
    }
    if (!(w.sum() > 0.0)) fail(ErrorKind::argument, "sum of weights must be positive");
  }
}

}  // namespace

FittedModel fit_linear(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w) {
  check_inputs(x, y, w);
  PolyMap poly = PolyMap::fit(x, spec.poly_degree);
  const Matrix xe = poly.expand(x);
  const Vector shift = xe.colwise().mean().transpose();
  LearnerSpec resolved = spec;

  LinearStats total;
  if (spec.lambda_grid.empty() || spec.kind == LearnerKind::ols) {
    total = LinearStats::compute(xe, y, w, shift);
  } else {
    if (spec.cv_folds < 2 || spec.cv_folds > x.rows()) {
      fail(ErrorKind::argument, "cv_folds must be in [2, n]");
    }
    const SplitPlan plan = make_splits(x.rows(), spec.cv_folds, spec.seed);
    std::vector<LinearStats> folds;
    for (int f = 0; f < plan.k; ++f) {
      const auto rows = plan.test_rows(f);
      folds.push_back(LinearStats::compute(xe, y, w, shift, &rows));
      if (f == 0) {
        total = folds.back();
      } else {
        total.m += folds.back().m;
        total.v += folds.back().v;
        total.syy += folds.back().syy;
      }
    }
    double best = 0.0;
    for (std::size_t g = 0; g < spec.lambda_grid.size(); ++g) {
      double loss = 0.0;
      for (const auto& fold : folds) {
        const LinearSolution sol = solve_linear(total.minus(fold), shift, spec, spec.lambda_grid[g]);
        const double fw = fold.weight();
        loss += fw > 0.0 ? std::sqrt(linear_sse(fold, shift, sol) / fw) : 0.0;
      }
      loss /= static_cast<double>(folds.size());
      if (g == 0 || loss < best) {
        best = loss;
        resolved.lambda = spec.lambda_grid[g];
      }
    }
  }
  LinearSolution sol = solve_linear(total, shift, spec, resolved.lambda);
  auto impl = std::make_shared<LinearPredictor>(std::move(poly), std::move(sol), false);
  return FittedModel(resolved, x.cols(), false, impl);
}

FittedModel fit_logistic(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w) {
  check_inputs(x, y, w);
  PolyMap poly = PolyMap::fit(x, spec.poly_degree);
  const Matrix xe = poly.expand(x);
  const Index n = xe.rows();
  const Index p = xe.cols();
  const Vector ww = w.size() ? w : Vector::Ones(n);
  const double wsum = ww.sum();

  const Vector mu = (xe.transpose() * ww) / wsum;
  Vector sd(p);
  std::vector<Index> active;
  for (Index j = 0; j < p; ++j) {
    const double var = (ww.array() * (xe.col(j).array() - mu[j]).square()).sum() / wsum;
    sd[j] = std::sqrt(var);
    if (var > 1e-13 * (var + mu[j] * mu[j]) && var > 1e-300) active.push_back(j);
  }
  const Index q = static_cast<Index>(active.size());
  Matrix a(n, q + 1);
  a.col(0).setOnes();
  for (Index k = 0; k < q; ++k) a.col(k + 1) = (xe.col(active[k]).array() - mu[active[k]]) / sd[active[k]];

  const double ybar = std::clamp((ww.array() * y.array()).sum() / wsum, 1e-12, 1.0 - 1e-12);
  Vector beta = Vector::Zero(q + 1);
  beta[0] = std::log(ybar / (1.0 - ybar));
  const double lam = spec.lambda;

  auto objective = [&](const Vector& b) {
    const Vector eta = a * b;
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double e = eta[i];
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      loss += ww[i] * (softplus - y[i] * e);
    }
    return loss / wsum + 0.5 * lam * b.tail(q).squaredNorm();
  };

  double current = objective(beta);
  for (int iter = 0; iter < 200; ++iter) {
    const Vector eta = a * beta;
    Vector prob(n), curv(n);
    for (Index i = 0; i < n; ++i) {
      prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
      curv[i] = ww[i] * prob[i] * (1.0 - prob[i]) / wsum;
    }
    Vector grad = a.transpose() * (ww.array() * (prob - y).array()).matrix() / wsum;
    grad.tail(q) += lam * beta.tail(q);
    Matrix hess = a.transpose() * (a.array().colwise() * curv.array()).matrix();
    hess.diagonal().tail(q).array() += lam;
    hess.diagonal().array() += 1e-10;
    const Vector step = hess.ldlt().solve(grad);
    double scale = 1.0;
    Vector next = beta - step;
    double value = objective(next);
    while (value > current + 1e-15 && scale > 1e-10) {
      scale *= 0.5;
      next = beta - scale * step;
      value = objective(next);
    }
    const double change = (scale * step).cwiseAbs().maxCoeff();
    beta = next;
    current = value;
    if (change < 1e-10) break;
  }

  LinearSolution sol;
  sol.coef = Vector::Zero(p);
  for (Index k = 0; k < q; ++k) sol.coef[active[k]] = beta[k + 1] / sd[active[k]];
  sol.intercept = beta[0] - mu.dot(sol.coef);
  auto impl = std::make_shared<LinearPredictor>(std::move(poly), std::move(sol), true);
  return FittedModel(spec, x.cols(), true, impl);
}

}  // namespace ivcate::detail
