#include "ivcate/ate.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace ivcate;
using testutil::error_kind;

namespace {

Residuals two_group_residuals(Index n, std::uint64_t seed, double c0, double c1, double th0, double th1) {
  // X in {0,1}; Z ~ Bernoulli(1/2); compliers take T = Z with probability c_X.
  Rng rng(seed);
  Residuals r;
  r.y_res.resize(n);
  r.t_res.resize(n);
  r.z_res.resize(n);
  for (Index i = 0; i < n; ++i) {
    const bool g = uniform01(rng) < 0.5;
    const double c = g ? c1 : c0;
    const double th = g ? th1 : th0;
    const double z = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    const double comp = uniform01(rng) < c ? 1.0 : 0.0;
    const double t = comp * z;
    const double y = th * t + 0.1 * standard_normal(rng);
    r.y_res[i] = y - th * c * 0.5;
    r.t_res[i] = t - c * 0.5;
    r.z_res[i] = z - 0.5;
  }
  return r;
}

}  // namespace

TEST_CASE("exogenous binary treatment recovers the effect") {
  const Index n = 20000;
  Rng rng(3);
  Residuals r;
  r.y_res.resize(n);
  r.t_res.resize(n);
  r.z_res.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double z = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    const double y = 2.0 * z + standard_normal(rng);
    r.y_res[i] = y - 1.0;
    r.t_res[i] = z - 0.5;
    r.z_res[i] = z - 0.5;
  }
  const EstimateWithCI e = estimate_dmlateiv(r, 0.95);
  CHECK(std::fabs(e.point - 2.0) <= 3.0 * e.std_error);
  CHECK(e.std_error > 0.0);
  CHECK(e.ci_low <= e.point);
  CHECK(e.point <= e.ci_high);
  CHECK(e.n_used == n);
}

TEST_CASE("irrelevant instrument is a weak-instrument error") {
  Residuals r;
  r.y_res = testutil::normal_vector(100, 1);
  r.t_res = Vector::Zero(100);
  r.z_res = testutil::normal_vector(100, 2);
  CHECK(error_kind([&] { estimate_dmlateiv(r, 0.95); }) == ErrorKind::weak_instrument);
  const std::string msg = testutil::error_message([&] { estimate_dmlateiv(r, 0.95); });
  CHECK(msg.find("1e-10") != std::string::npos);
  CHECK(error_kind([&] { check_instrument_strength(first_stage(r), 0.0); }) == ErrorKind::weak_instrument);
}

TEST_CASE("first-stage F guard") {
  const Residuals r = two_group_residuals(2000, 5, 0.5, 0.5, 1.0, 1.0);
  const FirstStage fs = first_stage(r);
  CHECK(fs.f_stat > 10.0);
  CHECK_NOTHROW(check_instrument_strength(fs, 10.0));
  const Residuals weak = two_group_residuals(400, 6, 0.02, 0.02, 1.0, 1.0);
  const FirstStage fw = first_stage(weak);
  CHECK(fw.f_stat < 10.0);
  CHECK(error_kind([&] { check_instrument_strength(fw, 10.0); }) == ErrorKind::weak_instrument);
  if (std::fabs(fw.mean_tz) > kRelevanceThreshold) CHECK_NOTHROW(check_instrument_strength(fw, 0.0));
}

TEST_CASE("scale equivariance in the outcome") {
  const Residuals r = two_group_residuals(5000, 7, 0.6, 0.3, 1.0, 2.0);
  const EstimateWithCI a = estimate_dmlateiv(r, 0.95);
  const EstimateWithCI d = estimate_dr_ate(r.y_res, 0.95);
  for (double c : {-2.0, 0.5, 1000.0}) {
    Residuals s = r;
    s.y_res *= c;
    const EstimateWithCI b = estimate_dmlateiv(s, 0.95);
    CHECK(b.point == doctest::Approx(c * a.point).epsilon(1e-12));
    CHECK(b.std_error == doctest::Approx(std::fabs(c) * a.std_error).epsilon(1e-12));
    const EstimateWithCI e = estimate_dr_ate(s.y_res, 0.95);
    CHECK(e.point == doctest::Approx(c * d.point).epsilon(1e-12));
    CHECK(e.std_error == doctest::Approx(std::fabs(c) * d.std_error).epsilon(1e-12));
  }
}

TEST_CASE("instrument sign flip leaves the point unchanged") {
  Residuals r = two_group_residuals(5000, 8, 0.6, 0.3, 1.0, 2.0);
  const double a = estimate_dmlateiv(r, 0.95).point;
  r.z_res = -r.z_res;
  CHECK(estimate_dmlateiv(r, 0.95).point == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("heterogeneous compliance: the point converges to the compliance-weighted effect") {
  const double c0 = 1.0, c1 = 0.2, th0 = 1.0, th1 = 3.0;
  // beta_X = c_X / 4, groups equally likely
  const double target = (th0 * c0 + th1 * c1) / (c0 + c1);
  const double ate = 0.5 * (th0 + th1);
  const EstimateWithCI e = estimate_dmlateiv(two_group_residuals(400000, 9, c0, c1, th0, th1), 0.95);
  CHECK(std::fabs(e.point - target) < 4.0 * e.std_error);
  CHECK(std::fabs(e.point - ate) > 10.0 * e.std_error);
}

TEST_CASE("constant pseudo-outcome") {
  const EstimateWithCI e = estimate_dr_ate(Vector::Constant(50, 0.37), 0.95);
  CHECK(e.point == 0.37);
  CHECK(e.std_error == 0.0);
  CHECK(e.ci_low == 0.37);
  CHECK(e.ci_high == 0.37);
  Vector bad = Vector::Ones(10);
  bad[2] = INFINITY;
  CHECK(error_kind([&] { estimate_dr_ate(bad, 0.95); }) == ErrorKind::argument);
}

TEST_CASE("pseudo-outcome mean estimate uses sd over root n") {
  const Vector y = testutil::normal_vector(1000, 12);
  const EstimateWithCI e = estimate_dr_ate(y, 0.9);
  const double m = y.mean();
  const double sd = std::sqrt((y.array() - m).square().sum() / 999.0);
  CHECK(e.point == doctest::Approx(m).epsilon(1e-14));
  CHECK(e.std_error == doctest::Approx(sd / std::sqrt(1000.0)).epsilon(1e-12));
  CHECK(e.ci_high - e.point == doctest::Approx(1.6448536269514722 * e.std_error).epsilon(1e-12));
}
