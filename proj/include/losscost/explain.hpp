#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "losscost/gbdt.hpp"
#include "losscost/pipeline.hpp"
#include "losscost/table.hpp"

namespace losscost {

struct FeatureScore {
  std::string name;
  double score = 0.0;
};

struct ImportanceVector {
  std::vector<FeatureScore> scores;  // encoding feature order
  std::string method;
  bool normalized = false;
};

/// Total split gain per design column over all trees.
Eigen::VectorXd mdi_columns(const GbdtModel& model);
/// Column gains summed per feature, optionally scaled to sum to one.
ImportanceVector mdi(const GbdtModel& model, const Encoding& encoding, bool normalize = true);

/// Mean increase in response-scale MSE when all design columns of a feature
/// are permuted together.
ImportanceVector mda(const FittedModel& model, const PortfolioTable& table, std::size_t n_repeats,
                     std::uint64_t seed);

/// Link-scale attributions, one column per design column (or per feature after aggregation).
struct ShapMatrix {
  Eigen::MatrixXd values;
  double base_value = 0.0;
  std::vector<std::string> names;
};

/// Expected tree output under the cover distribution.
double tree_expectation(const Tree& tree);
/// Path-dependent tree Shapley values of one row, accumulated into phi (scaled by `scale`).
void tree_shap_row(const Tree& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x, double scale,
                   Eigen::Ref<Eigen::RowVectorXd> phi);
ShapMatrix tree_shap(const GbdtModel& model, const Eigen::MatrixXd& x);
ShapMatrix aggregate_shap(const ShapMatrix& columns, const Encoding& encoding);

struct AleCurve {
  std::string feature;
  bool categorical = false;
  /// Numeric: bin edges. Categorical: category codes in plotting order.
  std::vector<double> edges;
  std::vector<std::string> labels;
  /// Centered accumulated effect at each edge (or category).
  std::vector<double> effect;
  double centering = 0.0;
  std::vector<std::size_t> bin_rows;
};

using LinkFunction = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

/// First-order ALE of one design column over the rows where it is observed.
/// Edges are empirical quantiles; the curve is linear between edges for centering.
AleCurve ale_numeric(const LinkFunction& f, const Eigen::MatrixXd& x, const Eigen::VectorXd& exposure,
                     Eigen::Index column, std::size_t n_bins, const std::vector<Eigen::Index>& rows);
/// Value of a centered numeric curve at x by linear interpolation (flat outside the edges).
double ale_value(const AleCurve& curve, double x);

AleCurve ale(const FittedModel& model, const PortfolioTable& table, const std::string& feature,
             std::size_t n_bins = 20);

}  // namespace losscost
