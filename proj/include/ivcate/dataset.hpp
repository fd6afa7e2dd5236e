#pragma once

#include "ivcate/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace ivcate {

struct IvDataset {
  Matrix x;
  Vector t;
  Vector z;
  Vector y;
  std::vector<std::string> column_names;
  bool binary = false;

  Index n() const { return y.size(); }
  Index d() const { return x.cols(); }

  // Throws validation error when an invariant is broken.
  void validate() const;
  IvDataset subset(const std::vector<Index>& rows) const;
};

enum class Normalization { none, quantile, standardize };

Normalization parse_normalization(const std::string& text);
std::string to_string(Normalization n);

struct CategoricalColumn {
  std::string name;
  std::string baseline;  // dropped level
};

struct Schema {
  std::string outcome = "y";
  std::string treatment = "t";
  std::string instrument = "z";
  std::vector<std::string> features;  // empty: every remaining column
  std::vector<CategoricalColumn> categorical;
  bool binary = false;
  Normalization normalization = Normalization::none;
  int quantiles = 1000;
};

// A parsed table before role assignment. Columns are numeric or string.
struct RawTable {
  std::vector<std::string> names;
  std::vector<std::variant<std::vector<double>, std::vector<std::string>>> columns;
  Index rows = 0;

  void add_numeric(std::string name, std::vector<double> values);
  void add_text(std::string name, std::vector<std::string> values);
};

RawTable read_raw_csv(std::istream& in, const std::vector<std::string>& text_columns);

// Role assignment, one-hot encoding and normalization. When raw_features is
// given it receives the encoded, un-normalized feature matrix.
IvDataset build_dataset(const RawTable& table, const Schema& schema,
                        Matrix* raw_features = nullptr);

IvDataset read_csv(std::istream& in, const Schema& schema);
IvDataset load_csv(const std::filesystem::path& path, const Schema& schema);

// Columns: y, t, z, then features. Values use shortest round-trip formatting.
void write_csv(std::ostream& out, const IvDataset& data);
void save_csv(const std::filesystem::path& path, const IvDataset& data);

std::string format_double(double v);

class QuantileNormalizer {
 public:
  QuantileNormalizer() = default;
  QuantileNormalizer(const Matrix& x, int quantiles);

  Matrix transform(const Matrix& x) const;
  int quantiles() const { return quantiles_; }

 private:
  int quantiles_ = 0;
  // Per column: sorted distinct values and their normalized levels.
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<double>> levels_;
};

Matrix quantile_normalize(const Matrix& x, int quantiles);

// Continuous columns to mean 0, sd 1; two-valued columns are left untouched.
Matrix standardize_continuous(const Matrix& x);

struct SplitPlan {
  std::vector<int> fold;
  int k = 2;
  std::uint64_t seed = 0;

  Index n() const { return static_cast<Index>(fold.size()); }
  std::vector<Index> test_rows(int f) const;
  std::vector<Index> train_rows(int f) const;
};

SplitPlan make_splits(Index n, int k, std::uint64_t seed);

}  // namespace ivcate
