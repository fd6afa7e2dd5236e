#pragma once

#include "ivcate/dgp.hpp"
#include "ivcate/pipeline.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ivcate {

struct EstimatorSpec {
  std::string name;
  Variant variant = Variant::driv;
  HypothesisSpace space{SpaceKind::constant, {}};

  // name[:space], e.g. "driv", "dmlateiv", "driv:linear_subset=4,7"
  static EstimatorSpec parse(const std::string& text);
};

struct ReplicateRow {
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double truth = 0.0;
  EstimateWithCI estimate;
  bool covered = false;
  std::vector<double> coef_points;
  std::vector<double> coef_truth;
  std::vector<bool> coef_covered;
  Index clip_count = 0;
  double cate_mse = 0.0;  // in-sample, against theta_0
};

struct CoefficientCoverage {
  std::string name;
  double mean_point = 0.0;
  double mean_truth = 0.0;
  double coverage = 0.0;
};

struct CoverageReport {
  std::string estimator;
  int replicates = 0;
  int failures = 0;
  double true_ate = 0.0;
  double mean_point = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  double mean_ci_width = 0.0;
  double mean_cate_mse = 0.0;
  std::vector<CoefficientCoverage> coefficients;
  std::vector<ReplicateRow> rows;
};

void to_json(nlohmann::json& j, const CoverageReport& r);
void write_replicates_csv(std::ostream& out, const std::vector<CoverageReport>& reports);

// options.variant and options.space are overridden per estimator.
std::vector<CoverageReport> run_coverage(const DgpSpec& dgp, const std::vector<EstimatorSpec>& estimators, int replicates,
                                         std::uint64_t seed, const FitOptions& options, int threads = 1);

enum class LossKind { l1, l2, l2_rw, l2_pi_rw };
enum class Direction { q, p, r, h, beta, v, theta_pre };

std::string to_string(LossKind l);
std::string to_string(Direction d);

struct OrthogonalityReport {
  LossKind loss = LossKind::l2;
  Direction direction = Direction::q;
  std::vector<double> t;
  std::vector<double> displacement;
  std::optional<double> slope;  // empty when flat
  bool flat = false;
  bool expected_orthogonal = true;
  bool pass = false;
};

void to_json(nlohmann::json& j, const OrthogonalityReport& r);

std::vector<double> default_t_grid();

// Displacement of the constant-space final-stage estimate when one oracle
// nuisance is moved along a smooth direction; evaluated on the conditional
// distribution of (T, Y) given (Z, X) at the sampled X.
OrthogonalityReport orthogonality_slope(LossKind loss, Direction direction, const DgpSpec& dgp,
                                        const std::vector<double>& t_grid);

// The 13 loss/direction pairs. Re-weighted losses use a constant-theta variant of dgp.
std::vector<OrthogonalityReport> orthogonality_matrix(const DgpSpec& dgp, const std::vector<double>& t_grid);

double cate_mse(const CateModel& model, const Vector& theta_true, const Matrix& x_eval);
double cate_mse(const CateModel& model, const SimulatedData& eval);

}  // namespace ivcate
