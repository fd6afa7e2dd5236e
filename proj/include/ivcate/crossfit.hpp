#pragma once

#include "ivcate/cate_model.hpp"
#include "ivcate/dataset.hpp"
#include "ivcate/learners.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ivcate {

enum class HMode { automatic, joint, stratified };
enum class ThetaPre { none, dmliv, zero };

struct NuisanceSpecs {
  LearnerSpec q;  // E[Y|X]; also used for the V regression when Z is not binary
  LearnerSpec p;  // E[T|X]
  LearnerSpec r;  // E[Z|X]
  LearnerSpec h;  // E[T|Z,X]
  LearnerSpec f;  // E[T*Z|X]
  std::optional<double> fixed_r;
  HMode h_mode = HMode::automatic;
  // Binary pipeline: p = r h1 + (1 - r) h0 and f = r h1 are derived from h.
  bool derive_from_h = false;
  ThetaPre theta_pre = ThetaPre::dmliv;
  HypothesisSpace pre_space;  // DMLIV space for the preliminary CATE
  LearnerSpec pre_learner = LearnerSpec::make(LearnerKind::shallow_forest);

  // linear | linear2 | lasso_logistic | gbt
  static NuisanceSpecs preset(const std::string& name);
};

// Predictor of h(z, x) = E[T | Z = z, X = x].
class TreatmentModel {
 public:
  enum class Mode { joint, stratified };

  TreatmentModel() = default;
  static TreatmentModel fit(const LearnerSpec& spec, const Vector& t, const Vector& z, const Matrix& x, Mode mode);

  Mode mode() const { return mode_; }
  Vector predict(const Vector& z, const Matrix& x) const;
  Vector predict_at(double z, const Matrix& x) const;
  std::string describe() const;

 private:
  Mode mode_ = Mode::joint;
  bool interactions_ = false;
  FittedModel joint_;
  FittedModel arm0_;
  FittedModel arm1_;
};

struct ComplianceScore {
  Vector delta;  // (2Z - 1)(h(1,X) - h(0,X)) / 2
  Vector p;      // (h(1,X) + h(0,X)) / 2
  Vector h1;
  Vector h0;
};

ComplianceScore compliance_delta(const TreatmentModel& h_model, const IvDataset& data);

struct NuisanceSet {
  Vector qhat;
  Vector phat;
  Vector rhat;
  Vector hhat;  // out-of-fold h(Z_i, X_i)
  Vector fhat;
  Vector beta;
  Vector v;
  std::optional<Vector> h1hat;
  std::optional<Vector> h0hat;
  std::optional<Vector> delta;
  std::optional<Vector> theta_pre;
  std::vector<TreatmentModel> h_models;  // one per fold
  SplitPlan plan;
  std::vector<std::string> learner_log;

  Index n() const { return qhat.size(); }
};

NuisanceSet fit_nuisances(const IvDataset& data, const NuisanceSpecs& specs, const SplitPlan& plan);

struct Residuals {
  Vector y_res;
  Vector t_res;
  Vector z_res;
  Vector z_pi_res;
};

Residuals compute_residuals(const IvDataset& data, const NuisanceSet& nuisances);

void write_nuisances_csv(std::ostream& out, const NuisanceSet& nuisances);

// Minimum value used for V(X) before division.
inline constexpr double kVFloor = 1e-12;

}  // namespace ivcate
