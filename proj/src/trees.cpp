#include "trees.hpp"

#include "ivcate/error.hpp"
#include "ivcate/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ivcate::detail {

double Tree::predict(const Matrix& x, Index row) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
    const TreeNode& node = nodes[static_cast<std::size_t>(k)];
    k = x(row, node.feature) <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(k)].value;
}

nlohmann::json Tree::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& node : nodes) {
    if (node.feature < 0) {
      out.push_back({{"leaf", node.value}});
    } else {
      out.push_back({{"feature", node.feature}, {"threshold", node.threshold}, {"left", node.left}, {"right", node.right}});
    }
  }
  return out;
}

Vector EnsemblePredictor::predict(const Matrix& x) const {
  Vector out = Vector::Constant(x.rows(), 0.0);
  for (Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (const auto& tree : trees_) s += tree.predict(x, i);
    double v = base_ + scale_ * s;
    if (logistic_) {
      v = std::clamp(1.0 / (1.0 + std::exp(-v)), kProbabilityClip, 1.0 - kProbabilityClip);
    }
    out[i] = v;
  }
  return out;
}

Vector EnsemblePredictor::importance(Index d) const {
  Vector imp = importance_.size() == d ? importance_ : Vector::Zero(d);
  const double total = imp.sum();
  if (total > 0.0) imp /= total;
  return imp;
}

nlohmann::json EnsemblePredictor::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"type", logistic_ ? "tree_ensemble_logistic" : "tree_ensemble"},
          {"base", base_},
          {"scale", scale_},
          {"trees", trees}};
}

namespace {

struct Binned {
  Index n = 0;
  Index d = 0;
  std::vector<std::vector<double>> cuts;  // x <= cuts[b] iff bin <= b
  std::vector<std::uint16_t> bins;        // column-major

  int nbins(Index j) const { return static_cast<int>(cuts[static_cast<std::size_t>(j)].size()) + 1; }
  std::uint16_t bin(Index i, Index j) const { return bins[static_cast<std::size_t>(j * n + i)]; }
};

Binned make_bins(const Matrix& x, int max_bins) {
  Binned b;
  b.n = x.rows();
  b.d = x.cols();
  b.cuts.resize(static_cast<std::size_t>(b.d));
  b.bins.resize(static_cast<std::size_t>(b.n * b.d));
  std::vector<double> col(static_cast<std::size_t>(b.n));
  for (Index j = 0; j < b.d; ++j) {
    for (Index i = 0; i < b.n; ++i) col[static_cast<std::size_t>(i)] = x(i, j);
    std::sort(col.begin(), col.end());
    std::vector<double> uniq;
    for (double v : col) {
      if (uniq.empty() || v != uniq.back()) uniq.push_back(v);
    }
    auto& cuts = b.cuts[static_cast<std::size_t>(j)];
    if (static_cast<int>(uniq.size()) <= max_bins) {
      for (std::size_t k = 0; k + 1 < uniq.size(); ++k) cuts.push_back(0.5 * (uniq[k] + uniq[k + 1]));
    } else {
      for (int k = 1; k < max_bins; ++k) {
        const double v = col[static_cast<std::size_t>(static_cast<double>(k) * static_cast<double>(b.n) / max_bins)];
        if (v < uniq.back() && (cuts.empty() || v > cuts.back())) cuts.push_back(v);
      }
    }
    for (Index i = 0; i < b.n; ++i) {
      const auto pos = std::lower_bound(cuts.begin(), cuts.end(), x(i, j)) - cuts.begin();
      b.bins[static_cast<std::size_t>(j * b.n + i)] = static_cast<std::uint16_t>(pos);
    }
  }
  return b;
}

struct GrowParams {
  int max_depth = 1;
  double min_child_weight = 0.0;  // on hessian sums
  double min_leaf = 0.0;          // on counts
  double reg_lambda = 0.0;
  double gamma = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const Binned& bins, const std::vector<double>& g, const std::vector<double>& h,
             const std::vector<double>& c, const GrowParams& params, Vector& importance)
      : bins_(bins), g_(g), h_(h), c_(c), params_(params), importance_(importance) {}

  Tree grow(std::vector<std::uint32_t> rows) {
    Tree tree;
    tree.nodes.emplace_back();
    split(tree, 0, rows, 0);
    return tree;
  }

 private:
  double leaf_value(double gs, double hs) const {
    const double denom = hs + params_.reg_lambda;
    return denom > 0.0 ? -gs / denom : 0.0;
  }
  double score(double gs, double hs) const {
    const double denom = hs + params_.reg_lambda;
    return denom > 0.0 ? gs * gs / denom : 0.0;
  }

  void split(Tree& tree, int node, std::vector<std::uint32_t>& rows, int depth) {
    double gs = 0.0, hs = 0.0, cs = 0.0;
    for (auto i : rows) {
      gs += g_[i];
      hs += h_[i];
      cs += c_[i];
    }
    tree.nodes[static_cast<std::size_t>(node)].value = leaf_value(gs, hs);
    if (depth >= params_.max_depth || hs <= 0.0) return;

    const double parent = score(gs, hs);
    double best_gain = 0.0;
    int best_feature = -1;
    int best_bin = -1;
    std::vector<double> hg, hh, hc;
    for (Index j = 0; j < bins_.d; ++j) {
      const int nb = bins_.nbins(j);
      if (nb < 2) continue;
      hg.assign(static_cast<std::size_t>(nb), 0.0);
      hh.assign(static_cast<std::size_t>(nb), 0.0);
      hc.assign(static_cast<std::size_t>(nb), 0.0);
      for (auto i : rows) {
        const auto b = bins_.bin(i, j);
        hg[b] += g_[i];
        hh[b] += h_[i];
        hc[b] += c_[i];
      }
      double gl = 0.0, hl = 0.0, cl = 0.0;
      for (int b = 0; b + 1 < nb; ++b) {
        gl += hg[static_cast<std::size_t>(b)];
        hl += hh[static_cast<std::size_t>(b)];
        cl += hc[static_cast<std::size_t>(b)];
        const double gr = gs - gl, hr = hs - hl, cr = cs - cl;
        if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
        if (cl < params_.min_leaf || cr < params_.min_leaf) continue;
        if (hl <= 0.0 || hr <= 0.0) continue;
        const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent) - params_.gamma;
        if (gain > best_gain * (1.0 + 1e-12) + 1e-300) {
          best_gain = gain;
          best_feature = static_cast<int>(j);
          best_bin = b;
        }
      }
    }
    if (best_feature < 0) return;

    std::vector<std::uint32_t> left, right;
    for (auto i : rows) {
      (bins_.bin(i, best_feature) <= best_bin ? left : right).push_back(i);
    }
    rows.clear();
    rows.shrink_to_fit();
    importance_[best_feature] += best_gain;
    const int l = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int r = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    TreeNode& parent_node = tree.nodes[static_cast<std::size_t>(node)];
    parent_node.feature = best_feature;
    parent_node.threshold = bins_.cuts[static_cast<std::size_t>(best_feature)][static_cast<std::size_t>(best_bin)];
    parent_node.left = l;
    parent_node.right = r;
    split(tree, l, left, depth + 1);
    split(tree, r, right, depth + 1);
  }

  const Binned& bins_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const std::vector<double>& c_;
  GrowParams params_;
  Vector& importance_;
};

void check_inputs(const Matrix& x, const Vector& y, const Vector& w) {
  if (x.rows() != y.size()) fail(ErrorKind::argument, "X and y row counts differ");
  if (x.rows() == 0) fail(ErrorKind::argument, "cannot fit on zero rows");
  if (!x.array().isFinite().all() || !y.array().isFinite().all()) {
    fail(ErrorKind::argument, "non-finite values in learner inputs");
  }
  if (w.size()) {
    if (w.size() != y.size()) fail(ErrorKind::argument, "weight length differs from y");
    if (!w.array().isFinite().all() || (w.array() < 0.0).any()) {
      fail(ErrorKind::argument, "weights must be finite and nonnegative");
    }
    if (!(w.sum() > 0.0)) fail(ErrorKind::argument, "sum of weights must be positive");
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

FittedModel fit_gbt(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w, bool classifier) {
  check_inputs(x, y, w);
  const Index n = x.rows();
  const Vector ww = w.size() ? w : Vector::Ones(n);

  // Deterministic validation split for early stopping.
  std::vector<std::uint32_t> train, valid;
  const Index n_valid = spec.validation_fraction > 0.0 && spec.early_stopping_rounds > 0
                            ? static_cast<Index>(std::floor(spec.validation_fraction * static_cast<double>(n)))
                            : 0;
  {
    std::vector<std::uint32_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0u);
    if (n_valid > 0 && n - n_valid >= 2) {
      Rng rng(derive_seed(spec.seed, 0x6762u));
      for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      valid.assign(order.begin(), order.begin() + n_valid);
      train.assign(order.begin() + n_valid, order.end());
      std::sort(valid.begin(), valid.end());
      std::sort(train.begin(), train.end());
    } else {
      train = order;
    }
  }

  double wsum = 0.0, wy = 0.0;
  for (auto i : train) {
    wsum += ww[i];
    wy += ww[i] * y[i];
  }
  if (!(wsum > 0.0)) fail(ErrorKind::argument, "sum of training weights must be positive");
  double base = wy / wsum;
  if (classifier) {
    const double pm = std::clamp(base, 1e-6, 1.0 - 1e-6);
    base = std::log(pm / (1.0 - pm));
  }

  GrowParams params;
  params.max_depth = spec.max_depth;
  params.min_child_weight = spec.scale_to_n
                                ? std::max(1.0, spec.min_child_weight * static_cast<double>(n) / 4.6e6)
                                : spec.min_child_weight;
  if (classifier) params.min_child_weight *= 0.25;  // hessian p(1-p) <= 1/4
  params.reg_lambda = spec.reg_lambda;
  params.gamma = spec.gamma;

  const Binned bins = make_bins(x, spec.max_bins);
  std::vector<double> g(static_cast<std::size_t>(n), 0.0), h(static_cast<std::size_t>(n), 0.0),
      c(static_cast<std::size_t>(n), 0.0);
  Vector f = Vector::Constant(n, base);
  Vector importance = Vector::Zero(x.cols());
  std::vector<Tree> trees;
  std::vector<Vector> importance_path;

  auto valid_loss = [&]() {
    double loss = 0.0, sw = 0.0;
    for (auto i : valid) {
      if (classifier) {
        const double p = std::clamp(sigmoid(f[i]), 1e-15, 1.0 - 1e-15);
        loss -= ww[i] * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
      } else {
        loss += ww[i] * (f[i] - y[i]) * (f[i] - y[i]);
      }
      sw += ww[i];
    }
    return sw > 0.0 ? loss / sw : 0.0;
  };

  double best = valid.empty() ? 0.0 : valid_loss();
  std::size_t best_size = 0;
  int since_best = 0;
  for (int t = 0; t < spec.n_trees; ++t) {
    for (auto i : train) {
      if (classifier) {
        const double p = sigmoid(f[i]);
        g[i] = ww[i] * (p - y[i]);
        h[i] = ww[i] * p * (1.0 - p);
      } else {
        g[i] = ww[i] * (f[i] - y[i]);
        h[i] = ww[i];
      }
      c[i] = ww[i] > 0.0 ? 1.0 : 0.0;
    }
    TreeGrower grower(bins, g, h, c, params, importance);
    Tree tree = grower.grow(train);
    for (Index i = 0; i < n; ++i) f[i] += spec.learning_rate * tree.predict(x, i);
    trees.push_back(std::move(tree));
    importance_path.push_back(importance);
    if (!valid.empty()) {
      const double loss = valid_loss();
      if (loss < best - 1e-15 * std::abs(best)) {
        best = loss;
        best_size = trees.size();
        since_best = 0;
      } else if (++since_best >= spec.early_stopping_rounds) {
        break;
      }
    } else {
      best_size = trees.size();
    }
  }
  trees.resize(best_size);
  Vector imp = best_size > 0 ? importance_path[best_size - 1] : Vector::Zero(x.cols());
  auto impl = std::make_shared<EnsemblePredictor>(std::move(trees), base, spec.learning_rate, classifier, imp);
  return FittedModel(spec, x.cols(), classifier, impl);
}

FittedModel fit_forest(const LearnerSpec& spec, const Matrix& x, const Vector& y, const Vector& w) {
  check_inputs(x, y, w);
  const Index n = x.rows();
  const Vector ww = w.size() ? w : Vector::Ones(n);
  GrowParams params;
  params.max_depth = spec.max_depth;
  params.min_leaf = spec.min_leaf > 0 ? spec.min_leaf : std::max(50.0, static_cast<double>(n) / 50.0);
  params.reg_lambda = 0.0;
  params.gamma = 0.0;
  params.min_child_weight = 0.0;

  const Binned bins = make_bins(x, spec.max_bins);
  std::vector<double> g(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n)), c(static_cast<std::size_t>(n));
  std::vector<double> counts(static_cast<std::size_t>(n));
  Vector importance = Vector::Zero(x.cols());
  std::vector<Tree> trees;
  Rng rng(derive_seed(spec.seed, 0x666f72u));
  for (int t = 0; t < spec.n_trees; ++t) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (Index k = 0; k < n; ++k) counts[uniform_index(rng, static_cast<std::uint64_t>(n))] += 1.0;
    std::vector<std::uint32_t> rows;
    for (Index i = 0; i < n; ++i) {
      const double cw = counts[static_cast<std::size_t>(i)] * ww[i];
      g[static_cast<std::size_t>(i)] = -cw * y[i];
      h[static_cast<std::size_t>(i)] = cw;
      c[static_cast<std::size_t>(i)] = ww[i] > 0.0 ? counts[static_cast<std::size_t>(i)] : 0.0;
      if (cw > 0.0) rows.push_back(static_cast<std::uint32_t>(i));
    }
    if (rows.empty()) continue;
    TreeGrower grower(bins, g, h, c, params, importance);
    trees.push_back(grower.grow(std::move(rows)));
  }
  if (trees.empty()) fail(ErrorKind::numerical, "forest has no trees with positive weight");
  const double scale = 1.0 / static_cast<double>(trees.size());
  auto impl = std::make_shared<EnsemblePredictor>(std::move(trees), 0.0, scale, false, importance);
  return FittedModel(spec, x.cols(), false, impl);
}

}  // namespace ivcate::detail
