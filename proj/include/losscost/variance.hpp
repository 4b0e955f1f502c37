#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "losscost/pipeline.hpp"
#include "losscost/synth.hpp"
#include "losscost/table.hpp"

namespace losscost {

/// Law-of-total-variance split of Var(Y) into noise (within both blocks), gain
/// (explained by the added block beyond the base block) and base terms.
struct DecompositionReport {
  double var_y = 0.0;
  double term_noise = 0.0;
  double term_gain = 0.0;
  double term_base = 0.0;
  /// Cross-check: mean within-bin variance of m_full over m_IH-quantile bins.
  double gain_binned = 0.0;
  /// Oracle only: standard error of var_y minus the summed terms.
  double standard_error = 0.0;
  bool three_term = true;
  std::string estimator;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<std::string> flags;

  double sum() const { return term_noise + term_gain + term_base; }
};

/// Population variance (divides by n).
double population_variance(const Eigen::VectorXd& v);

/// Estimates E[Y | base block] and E[Y | both blocks] with out-of-fold predictions
/// of `recipe` restricted to each block, then reads the terms off their variances.
DecompositionReport decompose(const PortfolioTable& table, const std::vector<std::string>& block_base,
                              const std::vector<std::string>& block_added, const ModelSpec& recipe,
                              const SplitPlan& plan, std::size_t gain_bins = 20);

/// The same terms computed from the generator's retained conditional moments.
DecompositionReport oracle_decompose(const PortfolioTable& table, const GroundTruth& truth);

}  // namespace losscost
