#include "ivcate/pipeline.hpp"

#include "ivcate/error.hpp"

namespace ivcate {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dmlateiv: return "dmlateiv";
    case Variant::dmliv: return "dmliv";
    case Variant::driv: return "driv";
    case Variant::driv_rw: return "driv_rw";
    case Variant::projected_driv_rw: return "projected_driv_rw";
  }
  return "driv";
}

Variant parse_variant(const std::string& text) {
  for (auto v : {Variant::dmlateiv, Variant::dmliv, Variant::driv, Variant::driv_rw, Variant::projected_driv_rw}) {
    if (to_string(v) == text) return v;
  }
  fail(ErrorKind::argument, "unknown variant '" + text + "' (expected dmlateiv|dmliv|driv|driv_rw|projected_driv_rw)");
}

nlohmann::json to_json(const FitResult& r, const std::vector<std::string>& column_names) {
  nlohmann::json j;
  j["variant"] = to_string(r.variant);
  j["ate"] = r.ate;
  if (r.projection) {
    LinearProjectionResult p = *r.projection;
    p.names = r.cate.coefficient_names(column_names);
    j["projection"] = p;
  } else {
    j["projection"] = nullptr;
  }
  j["overlap"] = r.overlap;
  j["first_stage"] = r.first_stage;
  j["clip"] = {{"count", r.clip_count}, {"beta_min", r.beta_min ? nlohmann::json(*r.beta_min) : nlohmann::json(nullptr)}};
  j["zero_weight_rows"] = r.zero_weight_rows;
  j["cate_model"] = r.cate.to_json(column_names);
  return j;
}

NuisanceSpecs specs_for_variant(NuisanceSpecs specs, Variant variant) {
  const bool needs_pre = variant == Variant::driv || variant == Variant::driv_rw || variant == Variant::projected_driv_rw;
  if (!needs_pre) specs.theta_pre = ThetaPre::none;
  if (needs_pre && specs.theta_pre == ThetaPre::none) specs.theta_pre = ThetaPre::dmliv;
  return specs;
}

namespace {

void weighted_summary(FitResult& out, const WeightedTarget& target, const IvDataset& data, const FitOptions& options) {
  out.zero_weight_rows = target.zero_weight_rows;
  if (!(target.weights.sum() > 0.0)) {
    fail(ErrorKind::no_identification, "instrument has no effect anywhere in-sample (all final-stage weights are zero)");
  }
  const LinearProjectionResult c = wls_robust(target.labels, Matrix::Ones(data.n(), 1), target.weights, options.level);
  out.ate = c.coefficient(0);
  out.cate = fit_final_stage(target, data.x, options.space, options.final_learner);
  if (options.space.is_parametric() && options.space.kind != SpaceKind::constant) {
    out.projection = wls_robust(target.labels, space_design(options.space, data.x), target.weights, options.level);
  }
}

}  // namespace

FitResult fit_with_nuisances(const IvDataset& data, const NuisanceSet& ns, const Residuals& res,
                             const FitOptions& options) {
  FitResult out;
  out.variant = options.variant;
  out.first_stage = first_stage(res);
  check_instrument_strength(out.first_stage, options.min_first_stage_f);
  out.overlap = overlap_diagnostic(ns, data.x, options.space);

  switch (options.variant) {
    case Variant::dmlateiv:
      out.ate = estimate_dmlateiv(res, options.level);
      out.cate = CateModel::constant(out.ate.point);
      break;
    case Variant::driv: {
      const PseudoOutcome po = driv_pseudo_outcome(res, ns, options.beta_min);
      out.clip_count = po.clip_count;
      out.beta_min = po.beta_min;
      out.ate = estimate_dr_ate(po.y_dr, options.level);
      out.cate = fit_driv(po, data.x, options.space, options.final_learner);
      if (options.space.is_parametric() && options.space.kind != SpaceKind::constant) {
        out.projection = ols_robust(po.y_dr, space_design(options.space, data.x), options.level);
      }
      break;
    }
    case Variant::dmliv:
      weighted_summary(out, dmliv_reduction(res), data, options);
      break;
    case Variant::driv_rw:
      weighted_summary(out, driv_rw_target(res, ns), data, options);
      break;
    case Variant::projected_driv_rw:
      weighted_summary(out, projected_driv_rw_target(res, ns), data, options);
      break;
  }
  return out;
}

FitOutput fit(const IvDataset& data, const FitOptions& options) {
  data.validate();
  const SplitPlan plan = make_splits(data.n(), options.folds, options.seed);
  FitOutput out;
  out.nuisances = fit_nuisances(data, specs_for_variant(options.nuisances, options.variant), plan);
  out.residuals = compute_residuals(data, out.nuisances);
  out.result = fit_with_nuisances(data, out.nuisances, out.residuals, options);
  return out;
}

FitOutput binary_iv_pipeline(const IvDataset& data, const FitOptions& options) {
  auto zero_one = [](const Vector& v) {
    return ((v.array() == 0.0) || (v.array() == 1.0)).all();
  };
  if (!zero_one(data.t) || !zero_one(data.z)) {
    fail(ErrorKind::argument, "binary pipeline requires 0/1 treatment and instrument");
  }
  if (options.variant != Variant::dmliv && options.variant != Variant::driv && options.variant != Variant::driv_rw) {
    fail(ErrorKind::argument, "binary pipeline supports variants dmliv, driv and driv_rw");
  }
  FitOptions opts = options;
  opts.nuisances.derive_from_h = true;
  opts.nuisances.h_mode = HMode::stratified;
  if (!opts.nuisances.fixed_r) opts.nuisances.fixed_r = 0.5;
  return fit(data, opts);
}

}  // namespace ivcate
