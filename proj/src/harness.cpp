#include "ivcate/harness.hpp"

#include "ivcate/error.hpp"
#include "ivcate/random.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

namespace ivcate {

EstimatorSpec EstimatorSpec::parse(const std::string& text) {
  EstimatorSpec e;
  e.name = text;
  const auto colon = text.find(':');
  e.variant = parse_variant(text.substr(0, colon));
  if (colon != std::string::npos) e.space = HypothesisSpace::parse(text.substr(colon + 1));
  return e;
}

namespace {

struct ReplicateOutcome {
  std::vector<ReplicateRow> rows;  // one per estimator
};

Vector projection_truth(const Vector& theta, const Matrix& design) {
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  return qr.solve(theta);
}

ReplicateOutcome run_replicate(const DgpSpec& base, const std::optional<NlsymCovariates>& covariates,
                               const std::vector<EstimatorSpec>& estimators, int rep, std::uint64_t seed,
                               const FitOptions& options) {
  ReplicateOutcome out;
  out.rows.resize(estimators.size());
  DgpSpec spec = base;
  spec.seed = derive_seed(seed, static_cast<std::uint64_t>(rep));
  for (auto& row : out.rows) {
    row.replicate = rep;
    row.seed = spec.seed;
  }
  auto describe = [](const Error& err) { return std::string(to_string(err.kind())) + ": " + err.what(); };
  auto fail_all = [&](const std::string& msg) {
    for (auto& row : out.rows) {
      row.ok = false;
      row.error = msg;
    }
  };
  try {
    const SimulatedData sim = covariates ? gen_nlsym_semi(*covariates, spec) : generate(spec);
    const IvDataset& data = sim.data;
    bool needs_pre = false;
    for (const auto& e : estimators) {
      needs_pre = needs_pre || specs_for_variant(options.nuisances, e.variant).theta_pre != ThetaPre::none;
    }
    NuisanceSpecs specs = options.nuisances;
    if (!needs_pre) specs.theta_pre = ThetaPre::none;
    else if (specs.theta_pre == ThetaPre::none) specs.theta_pre = ThetaPre::dmliv;
    const SplitPlan plan = make_splits(data.n(), options.folds, derive_seed(spec.seed, 77));
    const NuisanceSet ns = fit_nuisances(data, specs, plan);
    const Residuals res = compute_residuals(data, ns);

    for (std::size_t e = 0; e < estimators.size(); ++e) {
      ReplicateRow& row = out.rows[e];
      row.truth = sim.truth.true_ate;
      try {
        FitOptions opts = options;
        opts.variant = estimators[e].variant;
        opts.space = estimators[e].space;
        const FitResult fr = fit_with_nuisances(data, ns, res, opts);
        row.ok = true;
        row.estimate = fr.ate;
        row.covered = fr.ate.covers(row.truth);
        row.clip_count = fr.clip_count;
        const Vector pred = fr.cate.predict(data.x);
        row.cate_mse = (pred - sim.theta).squaredNorm() / static_cast<double>(data.n());
        if (fr.projection) {
          const Vector truth = projection_truth(sim.theta, space_design(opts.space, data.x));
          for (Index j = 0; j < truth.size(); ++j) {
            const EstimateWithCI c = fr.projection->coefficient(j);
            row.coef_points.push_back(c.point);
            row.coef_truth.push_back(truth[j]);
            row.coef_covered.push_back(c.covers(truth[j]));
          }
        }
      } catch (const Error& err) {
        row.ok = false;
        row.error = describe(err);
      }
    }
  } catch (const Error& err) {
    fail_all(describe(err));
  }
  return out;
}

CoverageReport summarize(const EstimatorSpec& est, std::vector<ReplicateRow> rows, const std::vector<std::string>& names) {
  CoverageReport r;
  r.estimator = est.name;
  r.replicates = static_cast<int>(rows.size());
  double sum = 0.0, sq = 0.0, cov = 0.0, width = 0.0, truth = 0.0, mse = 0.0;
  int ok = 0;
  std::size_t ncoef = 0;
  for (const auto& row : rows) {
    if (!row.ok) {
      ++r.failures;
      continue;
    }
    ++ok;
    sum += row.estimate.point;
    sq += (row.estimate.point - row.truth) * (row.estimate.point - row.truth);
    cov += row.covered ? 1.0 : 0.0;
    width += row.estimate.ci_high - row.estimate.ci_low;
    truth += row.truth;
    mse += row.cate_mse;
    ncoef = std::max(ncoef, row.coef_points.size());
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (ok > 0) {
    r.mean_point = sum / ok;
    r.true_ate = truth / ok;
    r.bias = r.mean_point - r.true_ate;
    r.rmse = std::sqrt(sq / ok);
    r.coverage = cov / ok;
    r.mean_ci_width = width / ok;
    r.mean_cate_mse = mse / ok;
  } else {
    r.mean_point = r.bias = r.rmse = r.coverage = r.mean_ci_width = r.mean_cate_mse = nan;
  }
  for (std::size_t j = 0; j < ncoef; ++j) {
    CoefficientCoverage c;
    c.name = j < names.size() ? names[j] : "coef" + std::to_string(j);
    int m = 0;
    for (const auto& row : rows) {
      if (!row.ok || row.coef_points.size() <= j) continue;
      ++m;
      c.mean_point += row.coef_points[j];
      c.mean_truth += row.coef_truth[j];
      c.coverage += row.coef_covered[j] ? 1.0 : 0.0;
    }
    if (m > 0) {
      c.mean_point /= m;
      c.mean_truth /= m;
      c.coverage /= m;
    }
    r.coefficients.push_back(c);
  }
  r.rows = std::move(rows);
  return r;
}

}  // namespace

std::vector<CoverageReport> run_coverage(const DgpSpec& dgp, const std::vector<EstimatorSpec>& estimators, int replicates,
                                         std::uint64_t seed, const FitOptions& options, int threads) {
  dgp.validate();
  if (replicates < 10) fail(ErrorKind::argument, "replicates must be >= 10");
  if (estimators.empty()) fail(ErrorKind::argument, "at least one estimator is required");
  std::optional<NlsymCovariates> covariates;
  if (dgp.family == DgpFamily::nlsym) {
    covariates = dgp.covariates_path.empty() ? nlsym_surrogate(dgp.covariate_seed, dgp.n)
                                             : load_nlsym_covariates(dgp.covariates_path, dgp.covariates_instrument);
  }

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(replicates));
  const int nthreads = std::max(1, std::min(threads, replicates));
  auto worker = [&](int start) {
    for (int rep = start; rep < replicates; rep += nthreads) {
      outcomes[static_cast<std::size_t>(rep)] = run_replicate(dgp, covariates, estimators, rep, seed, options);
    }
  };
  if (nthreads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  // names for projection coefficients
  std::vector<std::string> column_names;
  if (covariates) column_names = covariates->names;
  else {
    DgpSpec small = dgp;
    small.n = 100;
    column_names = generate(small).data.column_names;
  }

  std::vector<CoverageReport> reports;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    std::vector<ReplicateRow> rows;
    rows.reserve(outcomes.size());
    for (auto& o : outcomes) rows.push_back(std::move(o.rows[e]));
    std::vector<std::string> names{"intercept"};
    for (Index c : estimators[e].space.columns(static_cast<Index>(column_names.size()))) {
      names.push_back(column_names[static_cast<std::size_t>(c)]);
    }
    reports.push_back(summarize(estimators[e], std::move(rows), names));
  }
  return reports;
}

void to_json(nlohmann::json& j, const CoverageReport& r) {
  j = nlohmann::json{{"estimator", r.estimator},     {"replicates", r.replicates},       {"failures", r.failures},
                     {"true_ate", r.true_ate},       {"mean_point", r.mean_point},       {"bias", r.bias},
                     {"rmse", r.rmse},               {"coverage", r.coverage},           {"mean_ci_width", r.mean_ci_width},
                     {"mean_cate_mse", r.mean_cate_mse}};
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& c : r.coefficients) {
    coefs.push_back({{"name", c.name}, {"mean_point", c.mean_point}, {"mean_truth", c.mean_truth}, {"coverage", c.coverage}});
  }
  j["coefficients"] = coefs;
  std::vector<std::string> errors;
  for (const auto& row : r.rows) {
    if (!row.ok && errors.size() < 5) errors.push_back(row.error);
  }
  j["sample_errors"] = errors;
}

void write_replicates_csv(std::ostream& out, const std::vector<CoverageReport>& reports) {
  out << "estimator,replicate,seed,ok,point,stderr,ci_low,ci_high,truth,covered,clip_count,cate_mse,error\n";
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      out << r.estimator << ',' << row.replicate << ',' << row.seed << ',' << (row.ok ? 1 : 0) << ','
          << format_double(row.estimate.point) << ',' << format_double(row.estimate.std_error) << ','
          << format_double(row.estimate.ci_low) << ',' << format_double(row.estimate.ci_high) << ','
          << format_double(row.truth) << ',' << (row.covered ? 1 : 0) << ',' << row.clip_count << ','
          << format_double(row.cate_mse) << ',';
      std::string e = row.error;
      std::replace(e.begin(), e.end(), ',', ';');
      std::replace(e.begin(), e.end(), '\n', ' ');
      out << e << '\n';
    }
  }
}

std::string to_string(LossKind l) {
  switch (l) {
    case LossKind::l1: return "L1";
    case LossKind::l2: return "L2";
    case LossKind::l2_rw: return "L2rw";
    case LossKind::l2_pi_rw: return "L2pirw";
  }
  return "?";
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::q: return "q";
    case Direction::p: return "p";
    case Direction::r: return "r";
    case Direction::h: return "h";
    case Direction::beta: return "beta";
    case Direction::v: return "V";
    case Direction::theta_pre: return "theta_pre";
  }
  return "?";
}

std::vector<double> default_t_grid() { return {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1}; }

namespace {

using LD = long double;

constexpr LD kFlat = 1e-12L;

struct Population {
  std::vector<LD> r, h0, h1, ey0, ey1, theta, shape;
};

Population population(const SimulatedData& sim) {
  const Index n = sim.data.n();
  Population pop;
  const Vector u0 = sim.data.x.col(0);
  const double lo = u0.minCoeff(), hi = u0.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  for (Index i = 0; i < n; ++i) {
    pop.r.push_back(sim.oracle.r[i]);
    pop.h0.push_back(sim.oracle.h0[i]);
    pop.h1.push_back(sim.oracle.h1[i]);
    pop.ey0.push_back(sim.oracle.ey0[i]);
    pop.ey1.push_back(sim.oracle.ey1[i]);
    pop.theta.push_back(sim.theta[i]);
    const LD u = (u0[i] - lo) / span;
    pop.shape.push_back(1.0L / (1.0L + std::exp(-4.0L * (u - 0.5L))));
  }
  return pop;
}

LD mean_abs(const std::vector<LD>& v) {
  LD s = 0;
  for (LD x : v) s += std::fabs(x);
  return s / static_cast<LD>(v.size());
}

// Constant-space estimate under nuisances perturbed by t along the direction.
LD perturbed_estimate(LossKind loss, Direction dir, const Population& pop, LD t, LD scale) {
  const std::size_t n = pop.r.size();
  LD num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const LD r = pop.r[i], h0 = pop.h0[i], h1 = pop.h1[i], ey0 = pop.ey0[i], ey1 = pop.ey1[i];
    const LD p = r * h1 + (1 - r) * h0;
    const LD q = r * ey1 + (1 - r) * ey0;
    const LD beta = r * h1 - p * r;
    const LD v = r * (h1 - p) * (h1 - p) + (1 - r) * (h0 - p) * (h0 - p);
    const LD nu = t * scale * pop.shape[i];
    const LD qh = q + (dir == Direction::q ? nu : 0);
    const LD ph = p + (dir == Direction::p ? nu : 0);
    const LD rh = r + (dir == Direction::r ? nu : 0);
    const LD bh = beta + (dir == Direction::beta ? nu : 0);
    const LD vh = v + (dir == Direction::v ? nu : 0);
    const LD pre = pop.theta[i] + (dir == Direction::theta_pre ? nu : 0);
    for (int z = 0; z <= 1; ++z) {
      const LD w = z == 1 ? r : 1 - r;
      if (w == 0) continue;
      const LD et = z == 1 ? h1 : h0;
      const LD ey = z == 1 ? ey1 : ey0;
      const LD hh = et + (dir == Direction::h ? nu * z : 0);
      const LD yres = ey - qh;
      const LD tres = et - ph;
      const LD zres = z - rh;
      switch (loss) {
        case LossKind::l1: {
          const LD g = hh - ph;
          num += w * yres * g;
          den += w * g * g;
          break;
        }
        case LossKind::l2:
          num += w * (pre + (yres - pre * tres) * zres / bh);
          den += w;
          break;
        case LossKind::l2_rw:
          num += w * (pre * bh * bh + (yres - pre * tres) * zres * bh);
          den += w * bh * bh;
          break;
        case LossKind::l2_pi_rw: {
          const LD zpi = hh - ph;
          num += w * (pre * vh * vh + (yres - pre * tres) * zpi * vh);
          den += w * vh * vh;
          break;
        }
      }
    }
  }
  return num / den;
}

LD direction_scale(Direction dir, const Population& pop) {
  std::vector<LD> v(pop.r.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const LD r = pop.r[i], h0 = pop.h0[i], h1 = pop.h1[i];
    const LD p = r * h1 + (1 - r) * h0;
    switch (dir) {
      case Direction::q: v[i] = r * pop.ey1[i] + (1 - r) * pop.ey0[i]; break;
      case Direction::p: v[i] = p; break;
      case Direction::r: v[i] = r; break;
      case Direction::h: v[i] = h1; break;
      case Direction::beta: v[i] = r * h1 - p * r; break;
      case Direction::v: v[i] = r * (h1 - p) * (h1 - p) + (1 - r) * (h0 - p) * (h0 - p); break;
      case Direction::theta_pre: v[i] = pop.theta[i]; break;
    }
  }
  const LD s = mean_abs(v);
  return s > 0 ? s : 1;
}

OrthogonalityReport evaluate(LossKind loss, Direction dir, const Population& pop, const std::vector<double>& t_grid) {
  OrthogonalityReport rep;
  rep.loss = loss;
  rep.direction = dir;
  rep.expected_orthogonal = !(loss == LossKind::l1 && dir == Direction::h);
  rep.t = t_grid;
  const LD scale = direction_scale(dir, pop);
  const LD base = perturbed_estimate(loss, dir, pop, 0, scale);
  LD max_abs = 0;
  for (double t : t_grid) {
    const LD d = std::fabs(perturbed_estimate(loss, dir, pop, t, scale) - base);
    rep.displacement.push_back(static_cast<double>(d));
    max_abs = std::max(max_abs, d);
  }
  rep.flat = max_abs < kFlat;
  if (!rep.flat) {
    // least-squares slope of log|displacement| on log t, over positive displacements
    LD sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      if (!(rep.displacement[k] > 0)) continue;
      const LD x = std::log(static_cast<LD>(t_grid[k]));
      const LD y = std::log(static_cast<LD>(rep.displacement[k]));
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++m;
    }
    if (m >= 2) rep.slope = static_cast<double>((m * sxy - sx * sy) / (m * sxx - sx * sx));
  }
  if (rep.expected_orthogonal) rep.pass = rep.flat || (rep.slope && *rep.slope >= 1.8);
  else rep.pass = !rep.flat && rep.slope && *rep.slope >= 0.8 && *rep.slope <= 1.2;
  return rep;
}


void check_grid(const std::vector<double>& t_grid) {
  if (t_grid.size() < 4) fail(ErrorKind::argument, "t grid needs at least 4 points");
  for (double t : t_grid) {
    if (!(t > 0.0) || !std::isfinite(t)) fail(ErrorKind::argument, "t grid values must be positive");
  }
  const auto [lo, hi] = std::minmax_element(t_grid.begin(), t_grid.end());
  if (*hi < 100.0 * *lo * (1.0 - 1e-12)) fail(ErrorKind::argument, "t grid must span at least two decades");
}

bool valid_direction(LossKind loss, Direction d) {
  switch (loss) {
    case LossKind::l1: return d == Direction::q || d == Direction::p || d == Direction::h;
    case LossKind::l2:
      return d == Direction::theta_pre || d == Direction::beta || d == Direction::p || d == Direction::q ||
             d == Direction::r;
    case LossKind::l2_rw: return d == Direction::theta_pre || d == Direction::beta || d == Direction::q;
    case LossKind::l2_pi_rw: return d == Direction::theta_pre || d == Direction::v;
  }
  return false;
}

}  // namespace

OrthogonalityReport orthogonality_slope(LossKind loss, Direction direction, const DgpSpec& dgp,
                                        const std::vector<double>& t_grid) {
  check_grid(t_grid);
  if (!valid_direction(loss, direction)) {
    fail(ErrorKind::argument, "direction " + to_string(direction) + " is not a nuisance of loss " + to_string(loss));
  }
  DgpSpec spec = dgp;
  if ((loss == LossKind::l2_rw || loss == LossKind::l2_pi_rw) && !spec.constant_theta) {
    spec.constant_theta = generate(spec).truth.true_ate;
  }
  return evaluate(loss, direction, population(generate(spec)), t_grid);
}

std::vector<OrthogonalityReport> orthogonality_matrix(const DgpSpec& dgp, const std::vector<double>& t_grid) {
  check_grid(t_grid);
  const SimulatedData hetero = generate(dgp);
  DgpSpec cspec = dgp;
  if (!cspec.constant_theta) cspec.constant_theta = hetero.truth.true_ate;
  const Population het = population(hetero);
  const Population con = population(generate(cspec));
  std::vector<OrthogonalityReport> out;
  for (Direction d : {Direction::q, Direction::p, Direction::h}) out.push_back(evaluate(LossKind::l1, d, het, t_grid));
  for (Direction d : {Direction::theta_pre, Direction::beta, Direction::p, Direction::q, Direction::r}) {
    out.push_back(evaluate(LossKind::l2, d, het, t_grid));
  }
  for (Direction d : {Direction::theta_pre, Direction::beta, Direction::q}) {
    out.push_back(evaluate(LossKind::l2_rw, d, con, t_grid));
  }
  for (Direction d : {Direction::theta_pre, Direction::v}) out.push_back(evaluate(LossKind::l2_pi_rw, d, con, t_grid));
  return out;
}

void to_json(nlohmann::json& j, const OrthogonalityReport& r) {
  j = nlohmann::json{{"loss", to_string(r.loss)},
                     {"direction", to_string(r.direction)},
                     {"t", r.t},
                     {"displacement", r.displacement},
                     {"flat", r.flat},
                     {"expected_orthogonal", r.expected_orthogonal},
                     {"pass", r.pass}};
  j["slope"] = r.slope ? nlohmann::json(*r.slope) : nlohmann::json(nullptr);
}

double cate_mse(const CateModel& model, const Vector& theta_true, const Matrix& x_eval) {
  if (theta_true.size() != x_eval.rows()) fail(ErrorKind::argument, "theta and X row counts differ");
  if (x_eval.rows() == 0) fail(ErrorKind::argument, "empty evaluation sample");
  return (model.predict(x_eval) - theta_true).squaredNorm() / static_cast<double>(x_eval.rows());
}

double cate_mse(const CateModel& model, const SimulatedData& eval) { return cate_mse(model, eval.theta, eval.data.x); }

}  // namespace ivcate
