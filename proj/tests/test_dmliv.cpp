#include "ivcate/dgp.hpp"
#include "ivcate/dmliv.hpp"
#include "ivcate/harness.hpp"
#include "ivcate/pipeline.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace ivcate;
using testutil::error_kind;

namespace {

// Binary-instrument design with known conditional moments.
struct OracleDesign {
  IvDataset data;
  NuisanceSet ns;
};

OracleDesign constant_effect_design(Index n, double c, std::uint64_t seed) {
  Rng rng(seed);
  OracleDesign o;
  IvDataset& d = o.data;
  d.x = testutil::uniform_matrix(n, 2, seed + 1);
  d.column_names = {"a", "b"};
  d.t.resize(n);
  d.z.resize(n);
  d.y.resize(n);
  NuisanceSet& ns = o.ns;
  ns.qhat.resize(n);
  ns.phat.resize(n);
  ns.rhat = Vector::Constant(n, 0.5);
  ns.hhat.resize(n);
  ns.fhat.resize(n);
  ns.beta.resize(n);
  ns.v.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double comply = 0.4 + 0.4 * d.x(i, 0);
    const double u = uniform01(rng);  // confounder
    const double z = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    const double always = 0.1;
    const bool complier = uniform01(rng) < comply;
    const double t = complier ? z : (u < always ? 1.0 : 0.0);
    d.z[i] = z;
    d.t[i] = t;
    d.y[i] = c * t + 2.0 * u + d.x(i, 1) + 0.3 * standard_normal(rng);
    // E[T|Z,X] = comply Z + (1 - comply) * always
    const double h0 = (1 - comply) * always, h1 = comply + h0;
    // E[u | noncomplier, u < always] etc: E[Y|Z,X] = c h(Z) + 2 E[u|Z,X] + x1; E[u|Z,X] = 1/2 (u independent of Z)
    const double p = 0.5 * (h0 + h1);
    ns.hhat[i] = z == 1.0 ? h1 : h0;
    ns.phat[i] = p;
    ns.qhat[i] = c * p + 1.0 + d.x(i, 1);
    ns.fhat[i] = 0.5 * h1;
    ns.beta[i] = ns.fhat[i] - p * 0.5;
    ns.v[i] = 0.5 * (h1 - p) * (h1 - p) + 0.5 * (h0 - p) * (h0 - p);
  }
  ns.plan = make_splits(n, 2, 0);
  return o;
}

}  // namespace

TEST_CASE("reduction examples") {
  Residuals r;
  r.y_res = Vector::Ones(3);
  r.z_pi_res = Vector(3);
  r.z_pi_res << 0.5, 0.0, 5e-10;
  const WeightedTarget w = dmliv_reduction(r);
  CHECK(w.labels[0] == 2.0);
  CHECK(w.weights[0] == 0.25);
  CHECK(w.weights[1] == 0.0);
  CHECK(w.labels[1] == 0.0);
  CHECK(w.weights[2] == 0.0);
  CHECK(w.zero_weight_rows == 2);
}

TEST_CASE("weighted surrogate equals the partially orthogonal loss") {
  const Index n = 500;
  Residuals r;
  r.y_res = testutil::normal_vector(n, 1);
  r.z_pi_res = testutil::normal_vector(n, 2);
  const WeightedTarget w = dmliv_reduction(r);
  for (std::uint64_t s : {3u, 4u, 5u}) {
    const Vector theta = testutil::normal_vector(n, s);
    double direct = 0.0, surrogate = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double e = r.y_res[i] - theta[i] * r.z_pi_res[i];
      direct += e * e;
      surrogate += w.weights[i] * (w.labels[i] - theta[i]) * (w.labels[i] - theta[i]);
    }
    direct /= static_cast<double>(n);
    surrogate /= static_cast<double>(n);
    CHECK(surrogate == doctest::Approx(direct).epsilon(1e-9));
    CHECK(dmliv_loss(theta, r) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("well-specified constant effect with oracle nuisances") {
  const double c = 1.7;
  const OracleDesign o = constant_effect_design(40000, c, 11);
  const Residuals res = compute_residuals(o.data, o.ns);
  FitOptions opts;
  opts.variant = Variant::dmliv;
  opts.space = HypothesisSpace::parse("constant");
  const FitResult fr = fit_with_nuisances(o.data, o.ns, res, opts);
  CHECK(std::fabs(fr.ate.point - c) <= 3.0 * fr.ate.std_error);
  const CateModel m = fit_dmliv(o.data, o.ns, HypothesisSpace::parse("constant"), LearnerSpec::make(LearnerKind::ols));
  CHECK(m.coefficients()[0] == doctest::Approx(fr.ate.point).epsilon(1e-10));
}

TEST_CASE("linear fit satisfies first-order optimality of the empirical loss") {
  const OracleDesign o = constant_effect_design(5000, 1.0, 12);
  const Residuals res = compute_residuals(o.data, o.ns);
  const HypothesisSpace space = HypothesisSpace::parse("linear");
  const CateModel m = fit_dmliv(o.data, o.ns, space, LearnerSpec::make(LearnerKind::ols));
  const Matrix phi = space_design(space, o.data.x);
  const Vector theta = m.predict(o.data.x);
  const Vector e = res.y_res - theta.cwiseProduct(res.z_pi_res);
  const Vector grad = -2.0 * phi.transpose() * e.cwiseProduct(res.z_pi_res) / static_cast<double>(o.data.n());
  CHECK(grad.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("no instrument effect anywhere is a no-identification error") {
  OracleDesign o = constant_effect_design(200, 1.0, 13);
  o.ns.hhat = o.ns.phat;
  CHECK(error_kind([&] {
          fit_dmliv(o.data, o.ns, HypothesisSpace::parse("linear"), LearnerSpec::make(LearnerKind::ols));
        }) == ErrorKind::no_identification);
  const std::string msg = testutil::error_message([&] {
    fit_dmliv(o.data, o.ns, HypothesisSpace::parse("constant"), LearnerSpec::make(LearnerKind::ols));
  });
  CHECK(msg.find("instrument has no effect anywhere in-sample") != std::string::npos);
}

TEST_CASE("overlap diagnostics") {
  // perfect compliance: V = 1/4
  const Index n = 20000;
  Rng rng(14);
  IvDataset d;
  d.x = testutil::uniform_matrix(n, 2, 15);
  d.column_names = {"a", "b"};
  d.z.resize(n);
  d.y = testutil::normal_vector(n, 16);
  for (Index i = 0; i < n; ++i) d.z[i] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  d.t = d.z;
  NuisanceSpecs s = NuisanceSpecs::preset("linear");
  s.theta_pre = ThetaPre::none;
  s.fixed_r = 0.5;
  const NuisanceSet ns = fit_nuisances(d, s, make_splits(n, 2, 17));
  const OverlapDiagnostics od = overlap_diagnostic(ns, d.x, HypothesisSpace::parse("linear"));
  CHECK(std::fabs(od.v_mean - 0.25) < 0.01);
  CHECK(std::fabs(od.v_min - 0.25) < 0.02);
  CHECK(!od.weak);

  // instrument unrelated to treatment
  const Index m = 200000;
  IvDataset u;
  u.x = testutil::uniform_matrix(m, 2, 18);
  u.column_names = {"a", "b"};
  u.z.resize(m);
  u.t.resize(m);
  u.y = testutil::normal_vector(m, 19);
  for (Index i = 0; i < m; ++i) {
    u.z[i] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    u.t[i] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  }
  const NuisanceSet nu = fit_nuisances(u, s, make_splits(m, 2, 20));
  const OverlapDiagnostics ou = overlap_diagnostic(nu, u.x, HypothesisSpace::parse("linear"));
  REQUIRE(ou.lambda_min.has_value());
  CHECK(*ou.lambda_min < 1e-6);
  CHECK(ou.weak);
  CHECK(ou.v_mean < 1e-4);

  // coverage DGP
  DgpSpec spec;
  spec.family = DgpFamily::coverage;
  spec.n = 100000;
  spec.seed = 21;
  const SimulatedData sim = generate(spec);
  FitOptions opts;
  opts.variant = Variant::dmliv;
  opts.space = HypothesisSpace::parse("linear");
  opts.nuisances.fixed_r = 0.5;
  const FitOutput fo = fit(sim.data, opts);
  REQUIRE(fo.result.overlap.lambda_min.has_value());
  CHECK(*fo.result.overlap.lambda_min > 0.0);
  CHECK(to_json(fo.result, sim.data.column_names)["overlap"]["lambda_min"].get<double>() > 0.0);
}

TEST_CASE("linear coefficients on the coverage DGP are covered in at least 80 of 100 runs") {
  DgpSpec spec;
  spec.family = DgpFamily::coverage;
  spec.n = 100000;
  FitOptions opts;
  opts.nuisances.fixed_r = 0.5;
  const auto reports = run_coverage(spec, {EstimatorSpec::parse("dmliv:linear")}, 100, 31, opts, 4);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].failures == 0);
  REQUIRE(reports[0].coefficients.size() == 11);
  for (const auto& c : reports[0].coefficients) {
    INFO(c.name);
    CHECK(c.coverage >= 0.80);
  }
}
