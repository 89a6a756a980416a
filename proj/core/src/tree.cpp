#include "wdl/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "wdl/errors.hpp"

namespace wdl {
namespace {

struct Split {
  std::int32_t feature = RegressionTree::kLeaf;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const Matrix& x, std::span<const double> targets, const TreeParams& params)
      : x_(x), targets_(targets), params_(params), leaf_of_row_(x.rows(), 0) {}

  TreeFit grow() {
    std::vector<std::size_t> rows(x_.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    build(rows, 0);
    return {RegressionTree(std::move(nodes_), x_.cols()), std::move(leaf_of_row_)};
  }

 private:
  std::int32_t build(std::vector<std::size_t>& rows, std::size_t depth) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0.0;
    for (std::size_t r : rows) sum += targets_[r];
    nodes_[index].value = sum / static_cast<double>(rows.size());

    const Split split = depth < params_.max_depth ? best_split(rows) : Split{};
    if (split.feature == RegressionTree::kLeaf) {
      for (std::size_t r : rows) leaf_of_row_[r] = static_cast<std::size_t>(index);
      return index;
    }
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t r : rows) {
      (x_(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    nodes_[index].feature = split.feature;
    nodes_[index].threshold = split.threshold;
    const std::int32_t l = build(left, depth + 1);
    const std::int32_t r = build(right, depth + 1);
    nodes_[index].left = l;
    nodes_[index].right = r;
    return index;
  }

  Split best_split(const std::vector<std::size_t>& rows) const {
    Split best;
    const std::size_t n = rows.size();
    const std::size_t min_leaf = params_.min_samples_leaf;
    if (n < 2 * min_leaf) return best;
    const auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                              [&](std::size_t a, std::size_t b) { return targets_[a] < targets_[b]; });
    if (targets_[*lo] == targets_[*hi]) return best;

    double total = 0.0;
    for (std::size_t r : rows) total += targets_[r];

    std::vector<std::size_t> sorted(rows);
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
      double left_sum = 0.0;
      for (std::size_t pos = 1; pos < n; ++pos) {
        left_sum += targets_[sorted[pos - 1]];
        if (pos < min_leaf || n - pos < min_leaf) continue;
        const double a = x_(sorted[pos - 1], f);
        const double b = x_(sorted[pos], f);
        if (a == b) continue;
        const double n_left = static_cast<double>(pos);
        const double n_right = static_cast<double>(n - pos);
        const double diff = left_sum / n_left - (total - left_sum) / n_right;
        const double gain = n_left * n_right / static_cast<double>(n) * diff * diff;
        if (gain > best.gain) {
          double threshold = a + 0.5 * (b - a);
          if (!(threshold < b)) threshold = a;
          best = {static_cast<std::int32_t>(f), threshold, gain};
        }
      }
    }
    if (!(best.gain > params_.min_split_improvement)) return Split{};
    return best;
  }

  const Matrix& x_;
  std::span<const double> targets_;
  const TreeParams& params_;
  std::vector<RegressionTree::Node> nodes_;
  std::vector<std::size_t> leaf_of_row_;
};

}  // namespace

void TreeParams::validate() const {
  if (max_depth < 1) throw InvalidInputError("tree max_depth must be at least 1");
  if (min_samples_leaf < 1) throw InvalidInputError("tree min_samples_leaf must be at least 1");
  if (!(min_split_improvement >= 0.0)) throw InvalidInputError("tree min_split_improvement must be non-negative");
}

RegressionTree::RegressionTree(std::vector<Node> nodes, std::size_t input_dim)
    : nodes_(std::move(nodes)), input_dim_(input_dim) {
  if (nodes_.empty()) throw InvalidInputError("tree needs at least one node");
  // Every internal node must point at two later nodes, and every node except
  // the root must be referenced exactly once.
  std::vector<int> parents(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (!std::isfinite(node.value)) throw InvalidInputError("tree leaf value must be finite");
    if (node.feature == kLeaf) continue;
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= input_dim_) {
      throw InvalidInputError("tree split feature out of range");
    }
    if (!std::isfinite(node.threshold)) throw InvalidInputError("tree threshold must be finite");
    for (std::int32_t child : {node.left, node.right}) {
      if (child <= static_cast<std::int32_t>(i) || static_cast<std::size_t>(child) >= nodes_.size()) {
        throw InvalidInputError("tree child index out of range");
      }
      ++parents[static_cast<std::size_t>(child)];
    }
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (parents[i] != 1) throw InvalidInputError("tree node is unreachable or shared");
  }
}

RegressionTree RegressionTree::constant(double value, std::size_t input_dim) {
  Node leaf;
  leaf.value = value;
  return RegressionTree({leaf}, input_dim);
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature == kLeaf; }));
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes_[i].feature == kLeaf) continue;
    level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
    level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
  }
  return deepest;
}

std::size_t RegressionTree::leaf_index(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw InvalidInputError("covariate vector has dimension " + std::to_string(x.size()) + ", tree expects " +
                            std::to_string(input_dim_));
  }
  std::size_t i = 0;
  while (nodes_[i].feature != kLeaf) {
    const Node& node = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return i;
}

double RegressionTree::predict(std::span<const double> x) const { return nodes_[leaf_index(x)].value; }

bool RegressionTree::operator==(const RegressionTree& other) const {
  if (input_dim_ != other.input_dim_ || nodes_.size() != other.nodes_.size()) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& a = nodes_[i];
    const Node& b = other.nodes_[i];
    if (a.feature != b.feature || a.threshold != b.threshold || a.left != b.left || a.right != b.right ||
        a.value != b.value) {
      return false;
    }
  }
  return true;
}

TreeFit fit_tree_with_assignments(const Matrix& x, std::span<const double> targets, const TreeParams& params) {
  params.validate();
  if (x.rows() != targets.size()) throw InvalidInputError("tree targets must match covariate rows");
  if (x.cols() == 0) throw InvalidInputError("tree needs at least one covariate");
  if (x.rows() < 2 * params.min_samples_leaf) {
    throw InvalidInputError("tree needs at least 2 * min_samples_leaf rows, got " + std::to_string(x.rows()));
  }
  for (double t : targets) {
    if (!std::isfinite(t)) throw NumericalError("tree targets must be finite");
  }
  return TreeGrower(x, targets, params).grow();
}

RegressionTree fit_tree(const Matrix& x, std::span<const double> targets, const TreeParams& params) {
  return fit_tree_with_assignments(x, targets, params).tree;
}

double predict_tree(const RegressionTree& tree, std::span<const double> x) { return tree.predict(x); }

TreeEnsemble::TreeEnsemble(double base_value, double learning_rate, std::size_t input_dim)
    : base_value_(base_value), learning_rate_(learning_rate), input_dim_(input_dim) {
  if (!std::isfinite(base_value_)) throw InvalidInputError("ensemble base value must be finite");
  if (!(learning_rate_ > 0.0) || !std::isfinite(learning_rate_)) {
    throw InvalidInputError("learning rate must be positive");
  }
}

void TreeEnsemble::append(RegressionTree tree) {
  if (tree.input_dim() != input_dim_) throw InvalidInputError("tree dimension does not match the ensemble");
  trees_.push_back(std::move(tree));
}

void TreeEnsemble::truncate(std::size_t count) {
  if (count < trees_.size()) trees_.resize(count, RegressionTree::constant(0.0, input_dim_));
}

double TreeEnsemble::predict(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw InvalidInputError("covariate vector has dimension " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(input_dim_));
  }
  double total = 0.0;
  for (const auto& tree : trees_) total += tree.predict(x);
  return base_value_ + learning_rate_ * total;
}

double ensemble_predict(const TreeEnsemble& ensemble, std::span<const double> x) { return ensemble.predict(x); }

}  // namespace wdl
