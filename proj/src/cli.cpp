#include "ivcate/cli.hpp"

#include "ivcate/config.hpp"
#include "ivcate/dataset.hpp"
#include "ivcate/dgp.hpp"
#include "ivcate/error.hpp"
#include "ivcate/harness.hpp"
#include "ivcate/pipeline.hpp"
#include "ivcate/types.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace ivcate {

namespace {

using nlohmann::json;

constexpr int kThresholdFailed = 1;
constexpr int kError = 2;

struct Invocation {
  std::string command;
  std::string config_path;
  RunConfig flags;
};

void add_setting(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key,
                 const std::string& help) {
  app->add_option_function<std::string>(flag, [&inv, key](const std::string& v) { inv.flags.set(key, v); }, help);
}

void add_switch(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key,
                const std::string& help) {
  app->add_flag_callback(flag, [&inv, key]() { inv.flags.set(key, "true"); }, help);
}

void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "flat key=value file or a previous JSON report");
  add_setting(app, inv, "--seed", "seed", "random seed (fallback: IVCATE_SEED)");
  add_setting(app, inv, "--threads", "threads", "worker threads");
  add_setting(app, inv, "--out", "out", "output path ('-' for stdout)");
  add_setting(app, inv, "--level", "level", "confidence level");
  add_setting(app, inv, "--folds", "folds", "cross-fitting folds");
}

void add_estimation(CLI::App* app, Invocation& inv) {
  add_setting(app, inv, "--variant", "variant", "dmlateiv|dmliv|driv|driv_rw|projected_driv_rw");
  add_setting(app, inv, "--space", "space", "constant|linear|linear_subset=<cols>|forest|lasso");
  add_setting(app, inv, "--beta-min", "beta_min", "clip level for |beta| ('auto' for data-relative)");
  add_setting(app, inv, "--nuisance", "nuisance", "nuisance preset: linear|linear2|lasso_logistic|gbt");
  add_setting(app, inv, "--q-learner", "q_learner", "learner spec for E[Y|X]");
  add_setting(app, inv, "--p-learner", "p_learner", "learner spec for E[T|X]");
  add_setting(app, inv, "--r-learner", "r_learner", "learner spec for E[Z|X]");
  add_setting(app, inv, "--h-learner", "h_learner", "learner spec for E[T|Z,X]");
  add_setting(app, inv, "--f-learner", "f_learner", "learner spec for E[TZ|X]");
  add_setting(app, inv, "--final-learner", "final_learner", "learner for nonparametric spaces");
  add_setting(app, inv, "--theta-pre", "theta_pre", "preliminary CATE: dmliv|zero");
  add_setting(app, inv, "--pre-space", "pre_space", "hypothesis space of the preliminary CATE");
  add_setting(app, inv, "--fixed-r", "fixed_r", "known Pr[Z=1|X] ('none' to estimate)");
  add_switch(app, inv, "--derive-from-h", "derive_from_h", "binary Z: take p and E[TZ|X] from the fitted h");
  add_setting(app, inv, "--min-first-stage-f", "min_first_stage_f", "weak-instrument F threshold (0 disables)");
}

// ---- resolution ----

std::uint64_t resolve_seed(RunConfig& c) {
  if (!c.has("seed")) {
    const char* env = std::getenv("IVCATE_SEED");
    c.set("seed", env && *env ? env : "0");
  }
  return c.get_u64("seed");
}

void resolve_estimation(RunConfig& c) {
  c.set_default("variant", "driv");
  c.set_default("space", "constant");
  c.set_default("folds", "2");
  c.set_default("level", "0.95");
  c.set_default("beta_min", "auto");
  c.set_default("min_first_stage_f", "10");
  c.set_default("nuisance", "linear");
  c.set_default("theta_pre", "dmliv");
  c.set_default("pre_space", "linear");
  c.set_default("fixed_r", "none");
  c.set_default("derive_from_h", "false");
  const NuisanceSpecs preset = NuisanceSpecs::preset(c.get("nuisance"));
  c.set_default("q_learner", preset.q.to_string());
  c.set_default("p_learner", preset.p.to_string());
  c.set_default("r_learner", preset.r.to_string());
  c.set_default("h_learner", preset.h.to_string());
  c.set_default("f_learner", preset.f.to_string());
  const HypothesisSpace space = HypothesisSpace::parse(c.get("space"));
  c.set("space", space.to_string());
  c.set_default("final_learner", default_final_learner(space.kind).to_string());
  parse_variant(c.get("variant"));
}

FitOptions fit_options(const RunConfig& c) {
  FitOptions o;
  o.variant = parse_variant(c.get("variant"));
  o.space = HypothesisSpace::parse(c.get("space"));
  o.folds = c.get_int("folds");
  o.seed = c.get_u64("seed");
  o.level = c.get_double("level");
  if (!(o.level > 0.0 && o.level < 1.0)) fail(ErrorKind::argument, "level must lie in (0, 1)");
  if (c.get("beta_min") != "auto") {
    o.beta_min = c.get_double("beta_min");
    if (!(*o.beta_min > 0.0)) fail(ErrorKind::argument, "beta_min must be positive");
  }
  o.min_first_stage_f = c.get_double("min_first_stage_f");
  o.final_learner = LearnerSpec::parse(c.get("final_learner"));
  NuisanceSpecs& s = o.nuisances;
  s = NuisanceSpecs::preset(c.get("nuisance"));
  s.q = LearnerSpec::parse(c.get("q_learner"));
  s.p = LearnerSpec::parse(c.get("p_learner"));
  s.r = LearnerSpec::parse(c.get("r_learner"));
  s.h = LearnerSpec::parse(c.get("h_learner"));
  s.f = LearnerSpec::parse(c.get("f_learner"));
  const std::string pre = c.get("theta_pre");
  if (pre == "dmliv") s.theta_pre = ThetaPre::dmliv;
  else if (pre == "zero") s.theta_pre = ThetaPre::zero;
  else fail(ErrorKind::argument, "theta_pre must be dmliv or zero, got '" + pre + "'");
  s.pre_space = HypothesisSpace::parse(c.get("pre_space"));
  if (c.get("fixed_r") != "none") s.fixed_r = c.get_double("fixed_r");
  s.derive_from_h = c.get_bool("derive_from_h");
  return o;
}

Schema resolve_schema(RunConfig& c) {
  c.set_default("outcome", "y");
  c.set_default("treatment", "t");
  c.set_default("instrument", "z");
  c.set_default("normalize", "none");
  c.set_default("quantiles", "1000");
  c.set_default("binary", "false");
  Schema s;
  s.outcome = c.get("outcome");
  s.treatment = c.get("treatment");
  s.instrument = c.get("instrument");
  s.features = c.get_list("features");
  for (const auto& item : c.get_list("categorical")) {
    const auto eq = item.find('=');
    CategoricalColumn col;
    col.name = item.substr(0, eq);
    if (eq != std::string::npos) col.baseline = item.substr(eq + 1);
    s.categorical.push_back(col);
  }
  s.normalization = parse_normalization(c.get("normalize"));
  s.quantiles = c.get_int("quantiles");
  s.binary = c.get_bool("binary");
  return s;
}

DgpSpec resolve_dgp(RunConfig& c, const std::string& default_family, Index default_n) {
  c.set_default("family", default_family);
  DgpSpec d;
  d.family = parse_family(c.get("family"));
  c.set_default("n", std::to_string(d.family == DgpFamily::nlsym ? 3010 : default_n));
  c.set_default("coef", "default");
  c.set_default("zero_noise", "false");
  c.set_default("quantiles", "1000");
  d.n = static_cast<Index>(c.get_long("n"));
  if (c.get("coef") != "default") d.endogeneity_coef = c.get_double("coef");
  if (c.has("constant_theta")) d.constant_theta = c.get_double("constant_theta");
  d.zero_noise = c.get_bool("zero_noise");
  d.quantiles = c.get_int("quantiles");
  if (d.family == DgpFamily::nlsym) {
    c.set_default("covariate_seed", "3010");
    d.covariate_seed = c.get_u64("covariate_seed");
    d.covariates_path = c.get_or("covariates", "");
    d.covariates_instrument = c.get_or("covariates_instrument", "nearc4");
  }
  d.seed = c.get_u64("seed");
  d.validate();
  return d;
}

int resolve_threads(RunConfig& c) {
  // thread count never changes results, so it stays out of the embedded config
  int threads = 1;
  if (c.has("threads")) {
    threads = c.get_int("threads");
    c.erase("threads");
  }
  if (threads < 1) fail(ErrorKind::argument, "threads must be >= 1");
  return threads;
}

json report_header(const std::string& command, const RunConfig& c) {
  json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = c.get_u64("seed");
  j["config"] = c.to_json();
  return j;
}

void emit(const json& report, const RunConfig& c, std::ostream& out) {
  const std::string path = c.get_or("out", "-");
  const std::string text = report.dump(2) + "\n";
  if (path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::argument, "cannot write '" + path + "'");
  f << text;
}

// ---- commands ----

int cmd_fit(RunConfig c, std::ostream& out) {
  if (!c.has("data")) fail(ErrorKind::argument, "fit requires --data");
  resolve_seed(c);
  resolve_threads(c);
  const Schema schema = resolve_schema(c);
  resolve_estimation(c);
  c.set_default("out", "-");
  const IvDataset data = load_csv(c.get("data"), schema);
  const FitOptions options = fit_options(c);
  const FitOutput fo = schema.binary ? binary_iv_pipeline(data, options) : fit(data, options);
  if (c.has("nuisances_out")) {
    std::ofstream f(c.get("nuisances_out"), std::ios::binary);
    if (!f) fail(ErrorKind::argument, "cannot write '" + c.get("nuisances_out") + "'");
    write_nuisances_csv(f, fo.nuisances);
  }
  json report = report_header("fit", c);
  report["n"] = data.n();
  report["columns"] = data.column_names;
  report["result"] = to_json(fo.result, data.column_names);
  report["nuisance_learners"] = fo.nuisances.learner_log;
  emit(report, c, out);
  return 0;
}

int cmd_simulate(RunConfig c, std::ostream& out) {
  resolve_seed(c);
  resolve_threads(c);
  const DgpSpec spec = resolve_dgp(c, "coverage", 1000);
  if (!c.has("out") || c.get("out") == "-") fail(ErrorKind::argument, "simulate requires --out <csv path>");
  c.set_default("truth_out", c.get("out") + ".truth.json");
  const SimulatedData sim = generate(spec);
  save_csv(c.get("out"), sim.data);

  json report = report_header("simulate", c);
  json dgp;
  to_json(dgp, spec);
  report["dgp"] = dgp;
  json truth;
  to_json(truth, sim.truth);
  report["truth"] = truth;
  report["n"] = sim.data.n();
  report["columns"] = sim.data.column_names;
  report["sample_mean_theta"] = sim.theta.mean();
  const double var = (sim.theta.array() - sim.theta.mean()).square().mean();
  report["sample_var_theta"] = var;
  RunConfig truth_target;
  truth_target.set("out", c.get("truth_out"));
  emit(report, truth_target, out);
  return 0;
}

std::vector<EstimatorSpec> parse_estimators(const RunConfig& c) {
  std::vector<EstimatorSpec> out;
  for (const auto& item : c.get_list("estimators", ';')) {
    if (!item.empty()) out.push_back(EstimatorSpec::parse(item));
  }
  if (out.empty()) fail(ErrorKind::argument, "no estimators given");
  return out;
}

int cmd_coverage(RunConfig c, std::ostream& out) {
  resolve_seed(c);
  const int threads = resolve_threads(c);
  const DgpSpec spec = resolve_dgp(c, "coverage", 100000);
  resolve_estimation(c);
  c.set_default("replicates", "100");
  c.set_default("estimators", "dmlateiv;driv");
  c.set_default("out", "-");
  const FitOptions options = fit_options(c);
  const auto estimators = parse_estimators(c);
  const auto reports = run_coverage(spec, estimators, c.get_int("replicates"), c.get_u64("seed"), options, threads);
  if (c.has("csv")) {
    std::ofstream f(c.get("csv"), std::ios::binary);
    if (!f) fail(ErrorKind::argument, "cannot write '" + c.get("csv") + "'");
    write_replicates_csv(f, reports);
  }
  json report = report_header("coverage", c);
  json dgp;
  to_json(dgp, spec);
  report["dgp"] = dgp;
  report["estimators"] = reports;
  bool pass = true;
  if (c.has("min_coverage")) {
    const double threshold = c.get_double("min_coverage");
    json checks = json::array();
    for (const auto& r : reports) {
      const bool ok = r.failures < r.replicates && r.coverage >= threshold;
      checks.push_back({{"estimator", r.estimator}, {"coverage", r.coverage}, {"threshold", threshold}, {"pass", ok}});
      pass = pass && ok;
    }
    report["checks"] = checks;
    report["pass"] = pass;
  }
  emit(report, c, out);
  return pass ? 0 : kThresholdFailed;
}

json check(const std::string& name, bool pass, const std::string& detail) {
  return {{"name", name}, {"pass", pass}, {"detail", detail}};
}

int cmd_verify(RunConfig c, std::ostream& out) {
  resolve_seed(c);
  const int threads = resolve_threads(c);
  c.set_default("matrix", "full");
  const std::string matrix = c.get("matrix");
  if (matrix != "full" && matrix != "orthogonality" && matrix != "coverage") {
    fail(ErrorKind::argument, "unknown matrix '" + matrix + "' (expected full|orthogonality|coverage)");
  }
  c.set_default("out", "-");
  json report;
  json checks = json::array();
  bool pass = true;

  if (matrix != "coverage") {
    c.set_default("family", "coverage");
    c.set_default("n", "20000");
    c.set_default("t_grid", "0.001,0.002,0.005,0.01,0.02,0.05,0.1");
    DgpSpec spec;
    spec.family = parse_family(c.get("family"));
    spec.n = static_cast<Index>(c.get_long("n"));
    spec.seed = c.get_u64("seed");
    spec.validate();
    std::vector<double> grid;
    for (const auto& t : c.get_list("t_grid")) {
      RunConfig tmp;
      tmp.set("t", t);
      grid.push_back(tmp.get_double("t"));
    }
    const auto rows = orthogonality_matrix(spec, grid);
    report["orthogonality"] = rows;
    for (const auto& r : rows) {
      std::ostringstream detail;
      detail << (r.flat ? std::string("flat") : "slope " + (r.slope ? format_double(*r.slope) : std::string("n/a")));
      detail << (r.expected_orthogonal ? " (orthogonal expected)" : " (first-order sensitivity expected)");
      checks.push_back(check(to_string(r.loss) + "/" + to_string(r.direction), r.pass, detail.str()));
      pass = pass && r.pass;
    }
  }
  if (matrix != "orthogonality") {
    c.set_default("coverage_n", "100000");
    c.set_default("replicates", "100");
    c.set_default("folds", "2");
    c.set_default("nuisance", "linear");
    c.set_default("fixed_r", "0.5");
    RunConfig fc = c;
    fc.erase("space");
    fc.erase("variant");
    resolve_estimation(fc);
    for (const char* key : {"folds", "level", "beta_min", "min_first_stage_f", "nuisance", "theta_pre", "pre_space",
                            "fixed_r", "derive_from_h", "q_learner", "p_learner", "r_learner", "h_learner", "f_learner"}) {
      c.set(key, fc.get(key));
    }
    DgpSpec spec;
    spec.family = DgpFamily::coverage;
    spec.n = static_cast<Index>(c.get_long("coverage_n"));
    spec.seed = c.get_u64("seed");
    spec.validate();
    const FitOptions options = fit_options(fc);
    const std::vector<EstimatorSpec> estimators{EstimatorSpec::parse("driv"), EstimatorSpec::parse("dmlateiv")};
    const auto reports = run_coverage(spec, estimators, c.get_int("replicates"), spec.seed, options, threads);
    report["coverage"] = reports;
    const CoverageReport& driv = reports[0];
    const CoverageReport& late = reports[1];
    const bool c1 = driv.coverage >= 0.85;
    const bool c2 = late.coverage <= 0.60;
    const bool c3 = late.bias > 0.0;
    checks.push_back(check("driv coverage >= 0.85", c1, format_double(driv.coverage)));
    checks.push_back(check("dmlateiv coverage <= 0.60", c2, format_double(late.coverage)));
    checks.push_back(check("dmlateiv bias > 0", c3, format_double(late.bias)));
    pass = pass && c1 && c2 && c3;
  }
  json head = report_header("verify", c);
  head.update(report);
  head["checks"] = checks;
  head["pass"] = pass;
  emit(head, c, out);
  return pass ? 0 : kThresholdFailed;
}

void emit_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Invocation inv;
  CLI::App app{"Instrumental-variable CATE estimation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CLI::App* fit_cmd = app.add_subcommand("fit", "estimate ATE / CATE from a CSV file");
  add_common(fit_cmd, inv);
  add_estimation(fit_cmd, inv);
  add_setting(fit_cmd, inv, "--data", "data", "input CSV");
  add_setting(fit_cmd, inv, "--outcome", "outcome", "outcome column");
  add_setting(fit_cmd, inv, "--treatment", "treatment", "treatment column");
  add_setting(fit_cmd, inv, "--instrument", "instrument", "instrument column");
  add_setting(fit_cmd, inv, "--features", "features", "comma-separated feature columns (default: all others)");
  add_setting(fit_cmd, inv, "--categorical", "categorical", "comma-separated name[=baseline] columns to one-hot encode");
  add_setting(fit_cmd, inv, "--normalize", "normalize", "none|quantile|standardize");
  add_setting(fit_cmd, inv, "--quantiles", "quantiles", "quantile levels for --normalize quantile");
  add_setting(fit_cmd, inv, "--nuisances-out", "nuisances_out", "CSV of cross-fitted nuisance values");
  add_switch(fit_cmd, inv, "--binary", "binary", "binary treatment and instrument pipeline");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "draw a dataset from a semi-synthetic DGP");
  add_common(sim_cmd, inv);
  add_setting(sim_cmd, inv, "--family", "family", "tripadvisor|coverage|nlsym");
  add_setting(sim_cmd, inv, "--n", "n", "rows");
  add_setting(sim_cmd, inv, "--coef", "coef", "endogeneity coefficient");
  add_setting(sim_cmd, inv, "--constant-theta", "constant_theta", "replace theta(X) by a constant");
  add_setting(sim_cmd, inv, "--quantiles", "quantiles", "quantile levels of the feature normalization");
  add_setting(sim_cmd, inv, "--covariates", "covariates", "nlsym: covariate CSV (default: built-in surrogate)");
  add_setting(sim_cmd, inv, "--truth-out", "truth_out", "ground-truth JSON path (default: <out>.truth.json)");
  add_switch(sim_cmd, inv, "--zero-noise", "zero_noise", "drop additive outcome noise");

  CLI::App* cov_cmd = app.add_subcommand("coverage", "Monte Carlo coverage of estimator confidence intervals");
  add_common(cov_cmd, inv);
  add_estimation(cov_cmd, inv);
  add_setting(cov_cmd, inv, "--family", "family", "tripadvisor|coverage|nlsym");
  add_setting(cov_cmd, inv, "--n", "n", "rows per replicate");
  add_setting(cov_cmd, inv, "--coef", "coef", "endogeneity coefficient");
  add_setting(cov_cmd, inv, "--covariates", "covariates", "nlsym: covariate CSV");
  add_setting(cov_cmd, inv, "--replicates", "replicates", "number of replicates");
  add_setting(cov_cmd, inv, "--estimators", "estimators", "';'-separated variant[:space] list");
  add_setting(cov_cmd, inv, "--csv", "csv", "per-replicate CSV path");
  add_setting(cov_cmd, inv, "--min-coverage", "min_coverage", "exit 1 when any estimator covers less often");

  CLI::App* ver_cmd = app.add_subcommand("verify", "orthogonality matrix and reference coverage run");
  add_common(ver_cmd, inv);
  add_setting(ver_cmd, inv, "--matrix", "matrix", "full|orthogonality|coverage");
  add_setting(ver_cmd, inv, "--family", "family", "DGP of the orthogonality matrix");
  add_setting(ver_cmd, inv, "--n", "n", "rows of the orthogonality sample");
  add_setting(ver_cmd, inv, "--t-grid", "t_grid", "comma-separated perturbation sizes");
  add_setting(ver_cmd, inv, "--replicates", "replicates", "coverage replicates");
  add_setting(ver_cmd, inv, "--coverage-n", "coverage_n", "rows per coverage replicate");
  add_setting(ver_cmd, inv, "--nuisance", "nuisance", "nuisance preset of the coverage run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    emit_error(err, "argument", e.what());
    return kError;
  }

  try {
    RunConfig c;
    if (!inv.config_path.empty()) c = RunConfig::load(inv.config_path);
    c.merge(inv.flags);
    const std::string command = app.get_subcommands().front()->get_name();
    c.set("command", command);
    if (command == "fit") return cmd_fit(c, out);
    if (command == "simulate") return cmd_simulate(c, out);
    if (command == "coverage") return cmd_coverage(c, out);
    return cmd_verify(c, out);
  } catch (const Error& e) {
    emit_error(err, std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    emit_error(err, "internal", e.what());
  }
  return kError;
}

}  // namespace ivcate
