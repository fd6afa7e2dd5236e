#pragma once

#include "ivcate/ate.hpp"
#include "ivcate/cate_model.hpp"
#include "ivcate/crossfit.hpp"
#include "ivcate/dmliv.hpp"
#include "ivcate/driv.hpp"
#include "ivcate/inference.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace ivcate {

enum class Variant { dmlateiv, dmliv, driv, driv_rw, projected_driv_rw };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct FitOptions {
  Variant variant = Variant::driv;
  HypothesisSpace space{SpaceKind::constant, {}};
  LearnerSpec final_learner = LearnerSpec::make(LearnerKind::shallow_forest);
  NuisanceSpecs nuisances = NuisanceSpecs::preset("linear");
  int folds = 2;
  std::uint64_t seed = 0;
  double level = 0.95;
  std::optional<double> beta_min;
  double min_first_stage_f = 10.0;
};

struct FitResult {
  Variant variant = Variant::driv;
  EstimateWithCI ate;  // constant projection
  std::optional<LinearProjectionResult> projection;
  CateModel cate;
  OverlapDiagnostics overlap;
  FirstStage first_stage;
  Index clip_count = 0;
  std::optional<double> beta_min;
  Index zero_weight_rows = 0;
};

nlohmann::json to_json(const FitResult& r, const std::vector<std::string>& column_names);

// Final stage of one variant given fitted nuisances.
FitResult fit_with_nuisances(const IvDataset& data, const NuisanceSet& nuisances, const Residuals& res,
                             const FitOptions& options);

// Nuisance needs of a variant (theta_pre only for the DRIV family).
NuisanceSpecs specs_for_variant(NuisanceSpecs specs, Variant variant);

struct FitOutput {
  FitResult result;
  NuisanceSet nuisances;
  Residuals residuals;
};

FitOutput fit(const IvDataset& data, const FitOptions& options);

// Binary treatment and instrument: h fitted per arm, p = (h1 + h0) / 2 style
// quantities derived from h, r fixed at 1/2 unless options.nuisances.fixed_r says otherwise.
FitOutput binary_iv_pipeline(const IvDataset& data, const FitOptions& options);

}  // namespace ivcate
