#include "ivcate/crossfit.hpp"

#include "ivcate/dmliv.hpp"
#include "ivcate/error.hpp"
#include "ivcate/random.hpp"

#include <cmath>
#include <ostream>

namespace ivcate {

namespace {

bool is_zero_one(const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  }
  return true;
}

bool is_linear_kind(LearnerKind k) {
  return k == LearnerKind::ols || k == LearnerKind::ridge || k == LearnerKind::lasso || k == LearnerKind::logistic_l2;
}

// Classifier specs fall back to their regression counterpart on non-binary targets.
LearnerSpec regression_counterpart(const LearnerSpec& spec) {
  LearnerSpec s = spec;
  if (spec.kind == LearnerKind::logistic_l2) s.kind = LearnerKind::ridge;
  if (spec.kind == LearnerKind::gbt_classifier) s.kind = LearnerKind::gbt_regressor;
  return s;
}

FittedModel fit_target(const LearnerSpec& spec, const Matrix& x, const Vector& y, std::uint64_t seed,
                       const std::string& label) {
  LearnerSpec s = spec;
  s.seed = seed;
  try {
    if (is_classifier(s.kind)) {
      if (is_zero_one(y)) return fit_classifier(s, x, y);
      s = regression_counterpart(s);
    }
    return fit_regressor(s, x, y);
  } catch (const Error& e) {
    throw Error(e.kind(), "nuisance " + label + ": " + e.what());
  }
}

Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

Vector take(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = v[rows[i]];
  return out;
}

void put(Vector& dst, const std::vector<Index>& rows, const Vector& src) {
  for (std::size_t i = 0; i < rows.size(); ++i) dst[rows[i]] = src[static_cast<Index>(i)];
}

Matrix joint_design(const Vector& z, const Matrix& x, bool interactions) {
  const Index d = x.cols();
  Matrix out(x.rows(), 1 + d + (interactions ? d : 0));
  out.col(0) = z;
  out.middleCols(1, d) = x;
  if (interactions) out.rightCols(d) = x.array().colwise() * z.array();
  return out;
}

}  // namespace

NuisanceSpecs NuisanceSpecs::preset(const std::string& name) {
  NuisanceSpecs s;
  if (name == "linear" || name == "linear2") {
    LearnerSpec ridge = LearnerSpec::make(LearnerKind::ridge);
    ridge.lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
    ridge.poly_degree = name == "linear2" ? 2 : 1;
    s.q = s.p = s.r = s.h = s.f = ridge;
  } else if (name == "lasso_logistic") {
    LearnerSpec lasso = LearnerSpec::make(LearnerKind::lasso);
    lasso.lambda_grid = {0.1, 0.03, 0.01, 0.003, 0.001};
    LearnerSpec logit = LearnerSpec::make(LearnerKind::logistic_l2);
    logit.lambda_grid = {1e-3, 1e-2, 1e-1, 1.0};
    s.q = lasso;
    s.p = s.r = s.h = s.f = logit;
  } else if (name == "gbt") {
    s.q = LearnerSpec::make(LearnerKind::gbt_regressor);
    s.p = s.r = s.h = s.f = LearnerSpec::make(LearnerKind::gbt_classifier);
  } else {
    fail(ErrorKind::argument, "unknown nuisance preset '" + name + "' (expected linear|linear2|lasso_logistic|gbt)");
  }
  return s;
}

TreatmentModel TreatmentModel::fit(const LearnerSpec& spec, const Vector& t, const Vector& z, const Matrix& x,
                                   Mode mode) {
  TreatmentModel m;
  m.mode_ = mode;
  if (mode == Mode::joint) {
    m.interactions_ = is_linear_kind(spec.kind);
    m.joint_ = fit_target(spec, joint_design(z, x, m.interactions_), t, spec.seed, "h");
    return m;
  }
  if (!is_zero_one(z)) fail(ErrorKind::argument, "stratified treatment model requires a binary instrument");
  std::vector<Index> rows0, rows1;
  for (Index i = 0; i < z.size(); ++i) (z[i] == 1.0 ? rows1 : rows0).push_back(i);
  if (rows0.size() < 2 || rows1.size() < 2) {
    fail(ErrorKind::validation, "nuisance h: each instrument arm needs at least 2 training rows");
  }
  m.arm0_ = fit_target(spec, take_rows(x, rows0), take(t, rows0), derive_seed(spec.seed, 0), "h(z=0)");
  m.arm1_ = fit_target(spec, take_rows(x, rows1), take(t, rows1), derive_seed(spec.seed, 1), "h(z=1)");
  return m;
}

Vector TreatmentModel::predict(const Vector& z, const Matrix& x) const {
  if (mode_ == Mode::joint) return joint_.predict(joint_design(z, x, interactions_));
  if (!is_zero_one(z)) fail(ErrorKind::argument, "stratified treatment model evaluated at non-binary z");
  const Vector h0 = arm0_.predict(x);
  const Vector h1 = arm1_.predict(x);
  return (z.array() * h1.array() + (1.0 - z.array()) * h0.array()).matrix();
}

Vector TreatmentModel::predict_at(double z, const Matrix& x) const {
  return predict(Vector::Constant(x.rows(), z), x);
}

std::string TreatmentModel::describe() const {
  if (mode_ == Mode::joint) return "joint " + joint_.spec().to_string();
  return "stratified z=0 " + arm0_.spec().to_string() + "; z=1 " + arm1_.spec().to_string();
}

ComplianceScore compliance_delta(const TreatmentModel& h_model, const IvDataset& data) {
  if (!is_zero_one(data.z)) fail(ErrorKind::argument, "compliance score requires a binary instrument");
  ComplianceScore c;
  c.h1 = h_model.predict_at(1.0, data.x);
  c.h0 = h_model.predict_at(0.0, data.x);
  c.delta = ((2.0 * data.z.array() - 1.0) * (c.h1 - c.h0).array() / 2.0).matrix();
  c.p = (c.h1 + c.h0) / 2.0;
  return c;
}

NuisanceSet fit_nuisances(const IvDataset& data, const NuisanceSpecs& specs, const SplitPlan& plan) {
  const Index n = data.n();
  if (plan.n() != n) fail(ErrorKind::argument, "split plan does not cover the dataset");
  if (specs.fixed_r && !(*specs.fixed_r > 0.0 && *specs.fixed_r < 1.0)) {
    fail(ErrorKind::argument, "fixed_r must lie in (0, 1)");
  }
  const bool z_binary = is_zero_one(data.z);
  TreatmentModel::Mode mode = z_binary ? TreatmentModel::Mode::stratified : TreatmentModel::Mode::joint;
  if (specs.h_mode == HMode::joint) mode = TreatmentModel::Mode::joint;
  if (specs.h_mode == HMode::stratified) {
    if (!z_binary) fail(ErrorKind::argument, "stratified h requires a binary instrument");
    mode = TreatmentModel::Mode::stratified;
  }
  if (specs.derive_from_h && !z_binary) fail(ErrorKind::argument, "deriving p and f from h requires a binary instrument");

  NuisanceSet ns;
  ns.plan = plan;
  ns.qhat = ns.phat = ns.rhat = ns.hhat = ns.fhat = ns.v = Vector::Zero(n);
  Vector h1 = Vector::Zero(n), h0 = Vector::Zero(n);
  const Vector tz = data.t.cwiseProduct(data.z);

  for (int k = 0; k < plan.k; ++k) {
    const auto train = plan.train_rows(k);
    const auto test = plan.test_rows(k);
    if (test.empty() || train.empty()) fail(ErrorKind::argument, "empty fold in split plan");
    const Matrix xtr = take_rows(data.x, train);
    const Matrix xte = take_rows(data.x, test);
    const Vector ttr = take(data.t, train);
    const Vector ztr = take(data.z, train);
    const std::uint64_t fold_seed = derive_seed(plan.seed, static_cast<std::uint64_t>(k));
    const std::string fold = " (fold " + std::to_string(k) + ")";
    auto log = [&](const char* name, const FittedModel& m) {
      ns.learner_log.push_back("fold " + std::to_string(k) + " " + name + ": " + m.spec().to_string());
    };

    const FittedModel qm = fit_target(specs.q, xtr, take(data.y, train), derive_seed(fold_seed ^ specs.q.seed, 1), "q" + fold);
    put(ns.qhat, test, qm.predict(xte));
    log("q", qm);

    LearnerSpec hspec = specs.h;
    hspec.seed = derive_seed(fold_seed ^ specs.h.seed, 2);
    TreatmentModel hm;
    try {
      hm = TreatmentModel::fit(hspec, ttr, ztr, xtr, mode);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + fold);
    }
    ns.learner_log.push_back("fold " + std::to_string(k) + " h: " + hm.describe());
    const Vector zte = take(data.z, test);
    put(ns.hhat, test, hm.predict(zte, xte));
    if (z_binary) {
      put(h1, test, hm.predict_at(1.0, xte));
      put(h0, test, hm.predict_at(0.0, xte));
    }

    if (specs.fixed_r) {
      for (Index i : test) ns.rhat[i] = *specs.fixed_r;
    } else {
      const FittedModel rm = fit_target(specs.r, xtr, ztr, derive_seed(fold_seed ^ specs.r.seed, 3), "r" + fold);
      put(ns.rhat, test, rm.predict(xte));
      log("r", rm);
    }

    if (specs.derive_from_h) {
      for (Index i : test) {
        ns.phat[i] = ns.rhat[i] * h1[i] + (1.0 - ns.rhat[i]) * h0[i];
        ns.fhat[i] = ns.rhat[i] * h1[i];
      }
    } else {
      const FittedModel pm = fit_target(specs.p, xtr, ttr, derive_seed(fold_seed ^ specs.p.seed, 4), "p" + fold);
      put(ns.phat, test, pm.predict(xte));
      log("p", pm);
      const FittedModel fm = fit_target(specs.f, xtr, take(tz, train), derive_seed(fold_seed ^ specs.f.seed, 5), "tz_moment" + fold);
      put(ns.fhat, test, fm.predict(xte));
      log("tz_moment", fm);

      if (!z_binary) {
        // V(X) = E[(h(Z,X) - p(X))^2 | X] by regression on the training fold.
        const Vector gap = hm.predict(ztr, xtr) - pm.predict(xtr);
        const FittedModel vm = fit_target(regression_counterpart(specs.q), xtr, gap.array().square().matrix(),
                                          derive_seed(fold_seed ^ specs.q.seed, 6), "v" + fold);
        put(ns.v, test, vm.predict(xte));
        log("v", vm);
      }
    }
    ns.h_models.push_back(std::move(hm));
  }

  ns.beta = ns.fhat - ns.phat.cwiseProduct(ns.rhat);
  if (z_binary) {
    ns.h1hat = h1;
    ns.h0hat = h0;
    ns.delta = ((2.0 * data.z.array() - 1.0) * (h1 - h0).array() / 2.0).matrix();
    // Exact conditional expectation over Z ~ Bernoulli(r(X)).
    ns.v = (ns.rhat.array() * (h1 - ns.phat).array().square() +
            (1.0 - ns.rhat.array()) * (h0 - ns.phat).array().square())
               .matrix();
  }
  ns.v = ns.v.cwiseMax(kVFloor);

  if (specs.theta_pre == ThetaPre::zero) {
    ns.theta_pre = Vector::Zero(n);
  } else if (specs.theta_pre == ThetaPre::dmliv) {
    NuisanceSpecs inner = specs;
    inner.theta_pre = ThetaPre::none;
    Vector pre = Vector::Zero(n);
    for (int k = 0; k < plan.k; ++k) {
      const auto train = plan.train_rows(k);
      const auto test = plan.test_rows(k);
      const IvDataset sub = data.subset(train);
      const SplitPlan nested = make_splits(sub.n(), 2, derive_seed(plan.seed, 1000u + static_cast<std::uint64_t>(k)));
      const NuisanceSet inner_ns = fit_nuisances(sub, inner, nested);
      CateModel model;
      try {
        model = fit_dmliv(sub, inner_ns, specs.pre_space, specs.pre_learner);
      } catch (const Error& e) {
        throw Error(e.kind(), std::string("preliminary DMLIV (fold ") + std::to_string(k) + "): " + e.what());
      }
      put(pre, test, model.predict(take_rows(data.x, test)));
    }
    ns.theta_pre = pre;
  }
  return ns;
}

Residuals compute_residuals(const IvDataset& data, const NuisanceSet& nuisances) {
  const Index n = data.n();
  if (nuisances.qhat.size() != n || nuisances.phat.size() != n || nuisances.rhat.size() != n ||
      nuisances.hhat.size() != n) {
    fail(ErrorKind::internal, "nuisance arrays are not aligned with the dataset");
  }
  Residuals r;
  r.y_res = data.y - nuisances.qhat;
  r.t_res = data.t - nuisances.phat;
  r.z_res = data.z - nuisances.rhat;
  r.z_pi_res = nuisances.hhat - nuisances.phat;
  return r;
}

void write_nuisances_csv(std::ostream& out, const NuisanceSet& ns) {
  out << "fold,qhat,phat,rhat,hhat,tz_moment,beta,v";
  if (ns.h1hat) out << ",h1hat,h0hat,delta";
  if (ns.theta_pre) out << ",theta_pre";
  out << '\n';
  for (Index i = 0; i < ns.n(); ++i) {
    out << ns.plan.fold[static_cast<std::size_t>(i)] << ',' << format_double(ns.qhat[i]) << ','
        << format_double(ns.phat[i]) << ',' << format_double(ns.rhat[i]) << ',' << format_double(ns.hhat[i]) << ','
        << format_double(ns.fhat[i]) << ',' << format_double(ns.beta[i]) << ',' << format_double(ns.v[i]);
    if (ns.h1hat) {
      out << ',' << format_double((*ns.h1hat)[i]) << ',' << format_double((*ns.h0hat)[i]) << ','
          << format_double((*ns.delta)[i]);
    }
    if (ns.theta_pre) out << ',' << format_double((*ns.theta_pre)[i]);
    out << '\n';
  }
}

}  // namespace ivcate
