#pragma once

#include "ivcate/learners.hpp"

#include <cstdint>
#include <vector>

namespace ivcate::detail {

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;  // go left when x <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const Matrix& x, Index row) const;
  nlohmann::json to_json() const;
};

class EnsemblePredictor : public Predictor {
 public:
  EnsemblePredictor(std::vector<Tree> trees, double base, double scale, bool logistic, Vector importance)
      : trees_(std::move(trees)), base_(base), scale_(scale), logistic_(logistic), importance_(std::move(importance)) {}

  Vector predict(const Matrix& x) const override;
  Vector importance(Index d) const override;
  nlohmann::json to_json() const override;
  std::size_t size() const { return trees_.size(); }

 private:
  std::vector<Tree> trees_;
  double base_;
  double scale_;  // prediction = base + scale * sum(trees)
  bool logistic_;
  Vector importance_;
};

FittedModel fit_gbt(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w, bool classifier);
FittedModel fit_forest(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w);

}  // namespace ivcate::detail
