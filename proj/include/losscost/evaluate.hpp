#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "losscost/table.hpp"

namespace losscost {

/// Gini of observed values ordered by ascending prediction; equal predictions
/// keep their row order.
double gini_index(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs);
/// Same, with equal predictions taken in reverse row order.
double gini_index_reversed_ties(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs);
double percentage_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs);
double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs);
double mae(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs);

struct EvalReport {
  double gini = 0.0;
  double gini_tie_delta = 0.0;  // reversed-tie Gini minus gini
  double pe = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
  std::string label;
  std::string dataset;
};

EvalReport evaluate(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs, std::string label = {},
                    std::string dataset = {});

enum class LiftWeighting { Exposure, Count };

struct LiftBin {
  double exposure = 0.0;
  std::size_t rows = 0;
  double avg_observed = 0.0;
  double avg_current = 0.0;
  double avg_new = 0.0;
  double ratio_low = 0.0;
  double ratio_high = 0.0;
};

struct LiftChart {
  std::vector<LiftBin> bins;
  std::string sort_ratio = "new/current";
  std::vector<std::size_t> bin_of_row;
};

/// Rows sorted by pred_new / pred_current, packed in order into bins of (nearly)
/// equal exposure; per-bin averages are exposure weighted.
LiftChart double_lift(const Eigen::VectorXd& observed, const Eigen::VectorXd& current, const Eigen::VectorXd& next,
                      const Eigen::VectorXd& exposure, std::size_t n_quantiles = 30,
                      LiftWeighting weighting = LiftWeighting::Exposure);

using Predictor = std::function<Eigen::VectorXd(const PortfolioTable&)>;
/// Trains on a table and returns a response-scale predictor.
using Recipe = std::function<Predictor(const PortfolioTable& train, std::uint64_t seed)>;

struct CvResult {
  std::vector<EvalReport> folds;
  EvalReport mean;
  EvalReport stddev;
  /// Held-out prediction for every row, filled fold by fold.
  Eigen::VectorXd out_of_fold;
};

/// Deterministic per-fold seed derived from the plan seed.
std::uint64_t fold_seed(std::uint64_t plan_seed, std::size_t fold);

CvResult cross_validate(const PortfolioTable& table, const Recipe& recipe, const SplitPlan& plan,
                        const std::string& label = {});

enum class SelectionMetric { Mae, Rmse, Gini, Deviance };
std::string to_string(SelectionMetric metric);
SelectionMetric parse_selection_metric(const std::string& text);

/// Ordered hyperparameter axes; the grid is their Cartesian product.
using ParamGrid = std::vector<std::pair<std::string, std::vector<double>>>;
using ParamSet = std::vector<std::pair<std::string, double>>;
using RecipeFamily = std::function<Recipe(const ParamSet&)>;

struct GridPoint {
  ParamSet params;
  CvResult cv;
  double score = 0.0;  // mean over folds of the selection metric
};

struct GridResult {
  ParamSet best;
  std::size_t best_index = 0;
  std::vector<GridPoint> trace;
};

std::vector<ParamSet> expand_grid(const ParamGrid& grid);

/// Exhaustive cross-validated search. Lower is better except for Gini; ties go
/// to the lexicographically smallest parameter vector. Deviance is evaluated at
/// `deviance_power`.
GridResult grid_search(const PortfolioTable& table, const RecipeFamily& family, const ParamGrid& grid,
                       const SplitPlan& plan, SelectionMetric metric, double deviance_power = 1.5);

}  // namespace losscost
