#pragma once

#include "ivcate/dataset.hpp"
#include "ivcate/types.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ivcate {

enum class DgpFamily { tripadvisor, coverage, nlsym };

std::string to_string(DgpFamily f);
DgpFamily parse_family(const std::string& text);

struct DgpSpec {
  DgpFamily family = DgpFamily::coverage;
  Index n = 1000;  // nlsym: ignored when covariates come from a file
  std::optional<double> endogeneity_coef;  // nu multiplier in Y; family default when unset
  std::uint64_t seed = 0;
  std::optional<double> constant_theta;    // replaces theta(X) by a constant
  bool zero_noise = false;                 // additive outcome noise fixed at its mean
  int quantiles = 1000;
  std::uint64_t covariate_seed = 3010;     // nlsym surrogate covariates
  std::string covariates_path;             // nlsym: CSV with the instrument and 22 covariates
  std::string covariates_instrument = "nearc4";

  double coef() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const DgpSpec& s);

struct GroundTruth {
  std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)> theta_fn;  // raw feature row
  double true_ate = 0.0;
  double ate_precision = 0.0;  // 0: exact
  std::string description;

  Vector theta(const Matrix& raw_x) const;
};

void to_json(nlohmann::json& j, const GroundTruth& g);

// Exact conditional moments for binary-instrument designs, per row.
struct OracleNuisances {
  Vector r;    // Pr[Z = 1 | X]
  Vector h0;   // E[T | Z = 0, X]
  Vector h1;   // E[T | Z = 1, X]
  Vector ey0;  // E[Y | Z = 0, X]
  Vector ey1;  // E[Y | Z = 1, X]
  bool exact_r = true;

  Vector p() const;
  Vector q() const;
  Vector tz_moment() const;
  Vector beta() const;
  Vector v() const;
  Vector h(const Vector& z) const;
};

struct SimulatedData {
  IvDataset data;
  Matrix raw_x;   // encoded, un-normalized features
  Vector theta;   // theta_0 at each row
  GroundTruth truth;
  OracleNuisances oracle;
  Vector latent_nu;
  Vector latent_noise;
  double compliance_c0 = 0.0;  // nlsym only
};

SimulatedData gen_tripadvisor(const DgpSpec& spec);
SimulatedData gen_coverage(const DgpSpec& spec);

struct NlsymCovariates {
  Matrix x;  // raw values; column 4 mother's education, column 7 a binary indicator
  Vector z;
  std::vector<std::string> names;
  std::optional<Vector> r;  // known Pr[Z = 1 | X] for the surrogate
};

// Offline surrogate with 3,010 rows and 22 covariates.
NlsymCovariates nlsym_surrogate(std::uint64_t seed, Index n = 3010);
NlsymCovariates load_nlsym_covariates(const std::string& path, const std::string& instrument);

SimulatedData gen_nlsym_semi(const NlsymCovariates& covariates, const DgpSpec& spec);

// Dispatch on spec.family.
SimulatedData generate(const DgpSpec& spec);

// Outcome recomputed from stored latent draws and a treatment vector; the
// instrument does not enter.
Vector regenerate_outcome(const DgpSpec& spec, const SimulatedData& sim, const Vector& t);

}  // namespace ivcate
