#include "ivcate/dgp.hpp"

#include "ivcate/error.hpp"
#include "ivcate/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ivcate {

std::string to_string(DgpFamily f) {
  switch (f) {
    case DgpFamily::tripadvisor: return "tripadvisor";
    case DgpFamily::coverage: return "coverage";
    case DgpFamily::nlsym: return "nlsym";
  }
  return "coverage";
}

DgpFamily parse_family(const std::string& text) {
  if (text == "tripadvisor") return DgpFamily::tripadvisor;
  if (text == "coverage") return DgpFamily::coverage;
  if (text == "nlsym") return DgpFamily::nlsym;
  fail(ErrorKind::argument, "unknown DGP family '" + text + "' (expected tripadvisor|coverage|nlsym)");
}

double DgpSpec::coef() const {
  if (endogeneity_coef) return *endogeneity_coef;
  switch (family) {
    case DgpFamily::tripadvisor: return 0.1;
    case DgpFamily::coverage: return 0.2;
    case DgpFamily::nlsym: return 1.0;
  }
  return 0.0;
}

void DgpSpec::validate() const {
  if (family != DgpFamily::nlsym && n < 100) fail(ErrorKind::argument, "DGP sample size must be >= 100");
  if (family == DgpFamily::nlsym && covariates_path.empty() && n < 100) {
    fail(ErrorKind::argument, "DGP sample size must be >= 100");
  }
  if (!std::isfinite(coef())) fail(ErrorKind::argument, "endogeneity coefficient must be finite");
  if (quantiles < 2) fail(ErrorKind::argument, "quantile count must be >= 2");
}

void to_json(nlohmann::json& j, const DgpSpec& s) {
  j = nlohmann::json{{"family", to_string(s.family)},
                     {"n", s.n},
                     {"endogeneity_coef", s.coef()},
                     {"seed", s.seed},
                     {"zero_noise", s.zero_noise},
                     {"quantiles", s.quantiles}};
  j["constant_theta"] = s.constant_theta ? nlohmann::json(*s.constant_theta) : nlohmann::json(nullptr);
  if (s.family == DgpFamily::nlsym) {
    j["covariate_seed"] = s.covariate_seed;
    j["covariates_path"] = s.covariates_path;
  }
}

Vector GroundTruth::theta(const Matrix& raw_x) const {
  Vector out(raw_x.rows());
  for (Index i = 0; i < raw_x.rows(); ++i) out[i] = theta_fn(raw_x.row(i));
  return out;
}

void to_json(nlohmann::json& j, const GroundTruth& g) {
  j = nlohmann::json{{"true_ate", g.true_ate}, {"ate_precision", g.ate_precision}, {"theta", g.description}};
}

Vector OracleNuisances::p() const { return (r.array() * h1.array() + (1.0 - r.array()) * h0.array()).matrix(); }
Vector OracleNuisances::q() const { return (r.array() * ey1.array() + (1.0 - r.array()) * ey0.array()).matrix(); }
Vector OracleNuisances::tz_moment() const { return r.cwiseProduct(h1); }
Vector OracleNuisances::beta() const { return tz_moment() - p().cwiseProduct(r); }
Vector OracleNuisances::v() const {
  const Vector pp = p();
  return (r.array() * (h1 - pp).array().square() + (1.0 - r.array()) * (h0 - pp).array().square()).matrix();
}
Vector OracleNuisances::h(const Vector& z) const {
  return (z.array() * h1.array() + (1.0 - z.array()) * h0.array()).matrix();
}

namespace {

double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }
double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }
bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

// E over nu ~ U[0, 10] of scale * logistic(0.1 (x0 + nu)).
double mean_compliance(double scale, double x0) {
  return scale * (softplus(0.1 * (x0 + 10.0)) - softplus(0.1 * x0)) / (0.1 * 10.0);
}

struct TripDesign {
  double complier_scale;
  double noncomplier_rate;
  double baseline_coef;  // on X[0]
  double noise_scale;    // times U[0, 1]
  double intercept;
  double coef_x0;
  Index theta_binary_col;
  double coef_binary;
  double binary_mean;  // mean of the binary column in theta
  const char* description;
};

SimulatedData gen_trip(const DgpSpec& spec, const TripDesign& d) {
  spec.validate();
  const Index n = spec.n;
  const double coef = spec.coef();
  Rng rng(derive_seed(spec.seed, 0x7472u));

  const char* day_names[6] = {"days_visited_free_pre", "days_visited_hs_pre", "days_visited_rs_pre",
                              "days_visited_exp_pre", "days_visited_vrs_pre", "days_visited_fs_pre"};
  std::vector<std::vector<double>> days(6, std::vector<double>(static_cast<std::size_t>(n)));
  std::vector<double> locale(static_cast<std::size_t>(n)), revenue(static_cast<std::size_t>(n));
  std::vector<std::string> os(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n)), t(static_cast<std::size_t>(n));
  Vector nu(n), noise(n);
  static const char* os_levels[3] = {"OSX", "Windows", "Linux"};
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    for (int c = 0; c < 6; ++c) days[static_cast<std::size_t>(c)][k] = static_cast<double>(uniform_index(rng, 29));
    locale[k] = bernoulli(rng, 0.5) ? 1.0 : 0.0;
    os[k] = os_levels[uniform_index(rng, 3)];
    revenue[k] = std::exp(3.0 * standard_normal(rng));
    z[k] = bernoulli(rng, 0.5) ? 1.0 : 0.0;
    nu[i] = 10.0 * uniform01(rng);
    const bool c = bernoulli(rng, d.complier_scale * logistic(0.1 * (days[0][k] + nu[i])));
    const bool c0 = bernoulli(rng, d.noncomplier_rate);
    t[k] = z[k] == 1.0 ? (c ? 1.0 : 0.0) : (c0 ? 1.0 : 0.0);
    const double u = uniform01(rng);
    noise[i] = d.noise_scale * (spec.zero_noise ? 0.5 : u);
  }

  RawTable table;
  table.add_numeric("y", std::vector<double>(static_cast<std::size_t>(n), 0.0));
  table.add_numeric("t", t);
  table.add_numeric("z", z);
  for (int c = 0; c < 6; ++c) table.add_numeric(day_names[c], days[static_cast<std::size_t>(c)]);
  table.add_numeric("locale_en_US", locale);
  table.add_text("os_type", os);
  table.add_numeric("revenue_pre", revenue);

  Schema schema;
  schema.categorical = {{"os_type", "Windows"}};
  schema.binary = true;
  schema.normalization = Normalization::quantile;
  schema.quantiles = spec.quantiles;

  SimulatedData sim;
  sim.data = build_dataset(table, schema, &sim.raw_x);
  if (sim.raw_x.cols() != 10) fail(ErrorKind::internal, "unexpected encoded feature count");

  GroundTruth truth;
  if (spec.constant_theta) {
    const double c = *spec.constant_theta;
    truth.theta_fn = [c](const Eigen::Ref<const Eigen::RowVectorXd>&) { return c; };
    truth.true_ate = c;
    truth.description = "constant " + format_double(c);
  } else {
    const double a = d.intercept, b = d.coef_x0, g = d.coef_binary;
    const Index col = d.theta_binary_col;
    truth.theta_fn = [a, b, g, col](const Eigen::Ref<const Eigen::RowVectorXd>& x) { return a + b * x[0] + g * x[col]; };
    truth.true_ate = a + b * 14.0 + g * d.binary_mean;  // E[X0] = 14 under U{0..28}
    truth.description = d.description;
  }
  sim.truth = truth;
  sim.theta = truth.theta(sim.raw_x);
  sim.latent_nu = nu;
  sim.latent_noise = noise;
  sim.data.y = regenerate_outcome(spec, sim, sim.data.t);

  OracleNuisances& o = sim.oracle;
  o.r = Vector::Constant(n, 0.5);
  o.h0 = Vector::Constant(n, d.noncomplier_rate);
  o.h1.resize(n);
  o.ey0.resize(n);
  o.ey1.resize(n);
  const double noise_mean = 0.5 * d.noise_scale;
  for (Index i = 0; i < n; ++i) {
    const double x0 = sim.raw_x(i, 0);
    o.h1[i] = mean_compliance(d.complier_scale, x0);
    const double base = d.baseline_coef * x0 + noise_mean;
    o.ey0[i] = sim.theta[i] * (o.h0[i] + coef * 5.0) + base;
    o.ey1[i] = sim.theta[i] * (o.h1[i] + coef * 5.0) + base;
  }
  return sim;
}

TripDesign trip_design(DgpFamily f) {
  if (f == DgpFamily::tripadvisor) {
    return {0.017, 0.006, 0.4, 2.0, 0.2, 0.1, 6, -2.7, 0.5, "0.2 + 0.1*X[0] - 2.7*X[6] (raw features)"};
  }
  return {0.2, 0.1, 0.1, 0.1, 0.8, 0.5, 7, -3.0, 1.0 / 3.0, "0.8 + 0.5*X[0] - 3*X[7] (raw features)"};
}

}  // namespace

SimulatedData gen_tripadvisor(const DgpSpec& spec) {
  if (spec.family != DgpFamily::tripadvisor) fail(ErrorKind::argument, "spec family is not tripadvisor");
  return gen_trip(spec, trip_design(DgpFamily::tripadvisor));
}

SimulatedData gen_coverage(const DgpSpec& spec) {
  if (spec.family != DgpFamily::coverage) fail(ErrorKind::argument, "spec family is not coverage");
  return gen_trip(spec, trip_design(DgpFamily::coverage));
}

NlsymCovariates nlsym_surrogate(std::uint64_t seed, Index n) {
  if (n < 100) fail(ErrorKind::argument, "surrogate needs at least 100 rows");
  Rng rng(derive_seed(seed, 0x6e6cu));
  NlsymCovariates c;
  c.names = {"exper",  "black",  "south",  "smsa",   "momed",  "daded",    "momdad14", "sinmom14",
             "step14", "smsa66", "south66", "reg662", "reg663", "reg664",  "reg665",   "reg666",
             "reg667", "reg668", "reg669", "libcrd14", "married", "age"};
  c.x = Matrix::Zero(n, 22);
  c.z.resize(n);
  Vector r(n);

  // Family structure at 14 with fixed counts (momdad14, sinmom14, step14, other).
  const double scale = static_cast<double>(n) / 3010.0;
  const Index n_md = static_cast<Index>(std::lround(2378 * scale));
  const Index n_sm = static_cast<Index>(std::lround(301 * scale));
  const Index n_st = static_cast<Index>(std::lround(120 * scale));
  std::vector<int> family(static_cast<std::size_t>(n), 3);
  for (Index i = 0; i < n; ++i) {
    if (i < n_md) family[static_cast<std::size_t>(i)] = 0;
    else if (i < n_md + n_sm) family[static_cast<std::size_t>(i)] = 1;
    else if (i < n_md + n_sm + n_st) family[static_cast<std::size_t>(i)] = 2;
  }
  for (Index i = n - 1; i > 0; --i) {
    std::swap(family[static_cast<std::size_t>(i)], family[uniform_index(rng, static_cast<std::uint64_t>(i + 1))]);
  }

  auto bern = [&](double p) { return bernoulli(rng, p) ? 1.0 : 0.0; };
  auto clipped_normal = [&](double mean, double sd) {
    return std::clamp(std::round(mean + sd * standard_normal(rng)), 0.0, 18.0);
  };
  for (Index i = 0; i < n; ++i) {
    c.x(i, 0) = static_cast<double>(uniform_index(rng, 24));
    c.x(i, 1) = bern(0.23);
    c.x(i, 2) = bern(0.40);
    c.x(i, 3) = bern(0.71);
    c.x(i, 4) = clipped_normal(10.34, 3.0);
    c.x(i, 5) = clipped_normal(10.0, 3.7);
    const int fam = family[static_cast<std::size_t>(i)];
    c.x(i, 6) = fam == 0;
    c.x(i, 7) = fam == 1;
    c.x(i, 8) = fam == 2;
    c.x(i, 9) = bern(0.65);
    c.x(i, 10) = bern(0.41);
    const auto region = uniform_index(rng, 9);  // region 0 is the dropped baseline
    if (region > 0) c.x(i, 10 + static_cast<Index>(region)) = 1.0;
    c.x(i, 19) = bern(0.67);
    c.x(i, 20) = bern(0.76);
    c.x(i, 21) = 24.0 + static_cast<double>(uniform_index(rng, 11));
    r[i] = 0.45 + 0.25 * c.x(i, 9) - 0.1 * c.x(i, 10);
    c.z[i] = bern(r[i]);
  }
  // Pin the mother's-education mean at 10.38.
  const double target = std::round(10.38 * static_cast<double>(n));
  double sum = c.x.col(4).sum();
  while (sum != target) {
    const Index i = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    if (sum < target && c.x(i, 4) < 18.0) {
      c.x(i, 4) += 1.0;
      sum += 1.0;
    } else if (sum > target && c.x(i, 4) > 0.0) {
      c.x(i, 4) -= 1.0;
      sum -= 1.0;
    }
  }
  c.r = r;
  return c;
}

NlsymCovariates load_nlsym_covariates(const std::string& path, const std::string& instrument) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::argument, "cannot open covariate file '" + path + "'");
  const RawTable table = read_raw_csv(in, {});
  NlsymCovariates c;
  std::vector<std::size_t> feature_cols;
  bool found = false;
  for (std::size_t k = 0; k < table.names.size(); ++k) {
    const auto& col = std::get<std::vector<double>>(table.columns[k]);
    if (table.names[k] == instrument) {
      c.z = Eigen::Map<const Vector>(col.data(), static_cast<Index>(col.size()));
      found = true;
    } else {
      feature_cols.push_back(k);
    }
  }
  if (!found) fail(ErrorKind::schema, "missing instrument column '" + instrument + "' in covariate file");
  if (feature_cols.size() < 8) {
    fail(ErrorKind::schema, "covariate file needs feature columns 4 and 7; found only " +
                                std::to_string(feature_cols.size()) + " feature columns");
  }
  c.x.resize(table.rows, static_cast<Index>(feature_cols.size()));
  for (std::size_t j = 0; j < feature_cols.size(); ++j) {
    const auto& col = std::get<std::vector<double>>(table.columns[feature_cols[j]]);
    for (Index i = 0; i < table.rows; ++i) c.x(i, static_cast<Index>(j)) = col[static_cast<std::size_t>(i)];
    c.names.push_back(table.names[feature_cols[j]]);
  }
  return c;
}

SimulatedData gen_nlsym_semi(const NlsymCovariates& cov, const DgpSpec& spec) {
  if (cov.x.cols() < 8) fail(ErrorKind::schema, "nlsym covariates need columns 4 and 7");
  const Index n = cov.x.rows();
  if (cov.z.size() != n) fail(ErrorKind::schema, "instrument length differs from covariates");
  const double coef = spec.coef();
  Rng rng(derive_seed(spec.seed, 0x6e73u));
  SimulatedData sim;
  sim.compliance_c0 = 0.2 + 0.1 * uniform01(rng);
  const double c0 = sim.compliance_c0;
  sim.raw_x = cov.x;

  GroundTruth truth;
  if (spec.constant_theta) {
    const double c = *spec.constant_theta;
    truth.theta_fn = [c](const Eigen::Ref<const Eigen::RowVectorXd>&) { return c; };
    truth.description = "constant " + format_double(c);
  } else {
    truth.theta_fn = [](const Eigen::Ref<const Eigen::RowVectorXd>& x) { return 0.1 + 0.05 * x[4] - 0.1 * x[7]; };
    truth.description = "0.1 + 0.05*X[4] - 0.1*X[7] (raw features)";
  }
  sim.theta = truth.theta(sim.raw_x);
  truth.true_ate = sim.theta.mean();
  sim.truth = truth;

  sim.data.x = standardize_continuous(cov.x);
  sim.data.z = cov.z;
  sim.data.column_names = cov.names;
  sim.data.t.resize(n);
  sim.latent_nu.resize(n);
  sim.latent_noise.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x4 = cov.x(i, 4);
    sim.latent_nu[i] = uniform01(rng);
    const double e = 0.1 * standard_normal(rng);
    sim.latent_noise[i] = spec.zero_noise ? 0.0 : e;
    sim.data.t[i] = c0 * x4 * cov.z[i] + x4 + sim.latent_nu[i];
  }
  sim.data.y = regenerate_outcome(spec, sim, sim.data.t);
  sim.data.validate();

  OracleNuisances& o = sim.oracle;
  o.exact_r = cov.r.has_value();
  o.r = cov.r ? *cov.r : Vector::Constant(n, cov.z.mean());
  o.h0.resize(n);
  o.h1.resize(n);
  o.ey0.resize(n);
  o.ey1.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x4 = cov.x(i, 4);
    o.h0[i] = x4 + 0.5;
    o.h1[i] = c0 * x4 + x4 + 0.5;
    o.ey0[i] = sim.theta[i] * (o.h0[i] + coef * 0.5) + 0.05 * x4;
    o.ey1[i] = sim.theta[i] * (o.h1[i] + coef * 0.5) + 0.05 * x4;
  }
  return sim;
}

SimulatedData generate(const DgpSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case DgpFamily::tripadvisor: return gen_tripadvisor(spec);
    case DgpFamily::coverage: return gen_coverage(spec);
    case DgpFamily::nlsym: {
      const NlsymCovariates cov = spec.covariates_path.empty()
                                      ? nlsym_surrogate(spec.covariate_seed, spec.n)
                                      : load_nlsym_covariates(spec.covariates_path, spec.covariates_instrument);
      return gen_nlsym_semi(cov, spec);
    }
  }
  fail(ErrorKind::internal, "unknown DGP family");
}

Vector regenerate_outcome(const DgpSpec& spec, const SimulatedData& sim, const Vector& t) {
  const double coef = spec.coef();
  Index base_col = 0;
  double base_coef = 0.0;
  switch (spec.family) {
    case DgpFamily::tripadvisor: base_coef = 0.4; break;
    case DgpFamily::coverage: base_coef = 0.1; break;
    case DgpFamily::nlsym:
      base_col = 4;
      base_coef = 0.05;
      break;
  }
  return (sim.theta.array() * (t.array() + coef * sim.latent_nu.array()) +
          base_coef * sim.raw_x.col(base_col).array() + sim.latent_noise.array())
      .matrix();
}

}  // namespace ivcate
