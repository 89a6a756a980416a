#pragma once

// CART regression trees with exact greedy squared-error splitting, and the
// additive ensembles built from them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wdl/matrix.hpp"

namespace wdl {

struct TreeParams {
  std::size_t max_depth = 3;
  std::size_t min_samples_leaf = 10;
  double min_split_improvement = 0.0;

  void validate() const;
};

// Flat node storage; node 0 is the root. Leaves have feature == kLeaf.
class RegressionTree {
 public:
  static constexpr std::int32_t kLeaf = -1;

  struct Node {
    std::int32_t feature = kLeaf;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
  };

  RegressionTree(std::vector<Node> nodes, std::size_t input_dim);

  static RegressionTree constant(double value, std::size_t input_dim);

  std::span<const Node> nodes() const { return nodes_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t leaf_count() const;
  std::size_t depth() const;

  // Index of the leaf reached by x.
  std::size_t leaf_index(std::span<const double> x) const;
  double predict(std::span<const double> x) const;

  bool operator==(const RegressionTree&) const;

 private:
  std::vector<Node> nodes_;
  std::size_t input_dim_;
};

struct TreeFit {
  RegressionTree tree;
  // Leaf node index each training row was routed to while growing the tree.
  std::vector<std::size_t> leaf_of_row;
};

TreeFit fit_tree_with_assignments(const Matrix& x, std::span<const double> targets, const TreeParams& params);
RegressionTree fit_tree(const Matrix& x, std::span<const double> targets, const TreeParams& params);

double predict_tree(const RegressionTree& tree, std::span<const double> x);

class TreeEnsemble {
 public:
  TreeEnsemble(double base_value, double learning_rate, std::size_t input_dim);

  double base_value() const { return base_value_; }
  double learning_rate() const { return learning_rate_; }
  std::size_t input_dim() const { return input_dim_; }
  std::span<const RegressionTree> trees() const { return trees_; }
  std::size_t size() const { return trees_.size(); }

  void append(RegressionTree tree);
  // Drops trees beyond the first `count`.
  void truncate(std::size_t count);

  double predict(std::span<const double> x) const;

 private:
  double base_value_;
  double learning_rate_;
  std::size_t input_dim_;
  std::vector<RegressionTree> trees_;
};

double ensemble_predict(const TreeEnsemble& ensemble, std::span<const double> x);

}  // namespace wdl
