#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace losscost {

/// One node of a binary regression tree. Internal nodes send x to the left
/// child iff x[feature] <= threshold; missing values follow `missing_left`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  bool missing_left = true;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf constant (internal nodes keep the node's own estimate)
  double cover = 0.0;  // training weight reaching the node
  std::size_t count = 0;
  double gain = 0.0;  // split gain; zero for leaves

  bool is_leaf() const { return feature < 0; }
};

/// Flat tree, root at index 0.
struct Tree {
  std::vector<TreeNode> nodes;

  template <typename Row>
  int leaf_of(const Row& x) const {
    int at = 0;
    while (!nodes[static_cast<std::size_t>(at)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(at)];
      const double v = x(n.feature);
      const bool go_left = std::isnan(v) ? n.missing_left : v <= n.threshold;
      at = go_left ? n.left : n.right;
    }
    return at;
  }

  template <typename Row>
  double predict_row(const Row& x) const {
    return nodes[static_cast<std::size_t>(leaf_of(x))].value;
  }

  std::size_t leaves() const;
  int depth() const;
  int max_feature() const;
};

struct TreeConfig {
  int max_depth = 6;
  std::size_t min_child_samples = 1;
  int max_bins = 255;

  void validate() const;
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  bool missing_left = true;
};

/// Exhaustive weighted-SSE split search over midpoints of consecutive distinct
/// values. Returns nullopt (no split) when no candidate leaves min_child_samples
/// rows on both sides or the best gain is not positive. Ties keep the smaller
/// column, then the smaller threshold.
std::optional<SplitCandidate> best_split(std::span<const Eigen::Index> rows, const Eigen::MatrixXd& x,
                                         const Eigen::VectorXd& targets, const Eigen::VectorXd& weights,
                                         const TreeConfig& config);

/// Depth-first recursive binary splitting; leaves hold weighted target means.
Tree grow(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights,
          const TreeConfig& config);

Eigen::VectorXd predict_tree(const Tree& tree, const Eigen::MatrixXd& x);

/// Recomputes node cover and count by routing the given rows.
void assign_cover(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& weights);

/// Pre-order flat records.
void write_tree(std::ostream& out, const Tree& tree);
Tree read_tree(std::istream& in);

}  // namespace losscost
