#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "losscost/cart.hpp"

namespace losscost {

enum class Objective { Tweedie, Squared };
enum class LeafMode { Newton, Average };

std::string to_string(Objective objective);
Objective parse_objective(const std::string& text);

struct GossConfig {
  bool enabled = false;
  double top_rate = 0.2;
  double other_rate = 0.1;
};

struct GbdtConfig {
  std::size_t n_estimators = 100;
  double learning_rate = 0.1;
  std::size_t num_leaves = 31;
  int max_depth = 8;
  std::size_t min_child_samples = 20;
  double feature_fraction = 1.0;
  double subsample = 1.0;
  std::size_t subsample_for_bin = 200000;
  int max_bins = 255;
  double reg_alpha = 0.0;
  double reg_lambda = 0.0;
  GossConfig goss;
  bool efb = false;
  std::size_t conflict_budget = 0;
  double power = 1.5;
  Objective objective = Objective::Tweedie;
  LeafMode leaf_mode = LeafMode::Newton;
  std::uint64_t seed = 0;
  /// Stop after this many stages without validation improvement; 0 disables.
  std::size_t early_stopping_rounds = 0;

  void validate() const;
};

/// Value-to-bin map of one column. Value bins are 0..boundaries.size(); bin k
/// holds b[k-1] < x <= b[k]. Missing values use one extra bin after them.
struct BinMapper {
  std::vector<double> boundaries;
  /// Distinct values per bin when the column was binned exactly, else empty.
  std::vector<double> values;
  bool has_missing = false;

  int value_bins() const { return static_cast<int>(boundaries.size()) + 1; }
  int bins() const { return value_bins() + (has_missing ? 1 : 0); }
  int missing_bin() const { return value_bins(); }
  bool exact() const { return !values.empty(); }
  bool splittable() const { return !boundaries.empty(); }
  /// Bin of the value zero; bundling stores every other bin explicitly.
  int default_bin() const { return bin_of(0.0); }
  int bin_of(double x) const;
};

/// Quantile boundaries from a seeded row subsample; exact midpoints when the
/// column has at most max_bins distinct values.
std::vector<BinMapper> build_bins(const Eigen::MatrixXd& x, std::size_t subsample_for_bin, int max_bins,
                                  std::uint64_t seed = 0);

/// A group of columns stored as one offset-encoded bin column.
struct Bundle {
  std::vector<std::size_t> columns;
};

/// Greedy bundling of rarely co-nonzero columns (NaN counts as nonzero),
/// visiting columns by descending nonzero count. Unsplittable columns are left out.
std::vector<Bundle> bundle_features(const Eigen::MatrixXd& x, const std::vector<BinMapper>& bins,
                                    std::size_t conflict_budget);

/// Binned design matrix, one stored column per bundle.
class BinnedMatrix {
 public:
  BinnedMatrix(const Eigen::MatrixXd& x, const std::vector<BinMapper>& bins, const std::vector<Bundle>& bundles);

  std::size_t groups() const { return groups_.size(); }
  std::size_t rows() const { return rows_; }
  /// Bin of original column `column` in row `row`, decoded from its bundle.
  int bin(std::size_t row, std::size_t column) const;
  int group_bin(std::size_t row, std::size_t group) const { return groups_[group].data[row]; }
  int group_bins(std::size_t group) const { return groups_[group].total_bins; }
  const std::vector<std::size_t>& group_columns(std::size_t group) const { return groups_[group].columns; }
  std::size_t group_of(std::size_t column) const { return column_group_[column]; }
  /// Group-bin slot holding bin `b` of `column`, or -1 when b is its bundle default.
  int slot(std::size_t column, int b) const;
  /// Bins of `column` for every row, recovered from the stored bundle.
  std::vector<int> unbundle(std::size_t column) const;

 private:
  struct Group {
    std::vector<std::size_t> columns;
    std::vector<int> offset;
    std::vector<int> default_bin;
    std::vector<int> bins;
    int total_bins = 0;
    bool bundled = false;
    std::vector<std::uint16_t> data;
  };
  std::size_t rows_ = 0;
  std::vector<Group> groups_;
  std::vector<std::size_t> column_group_;
  std::vector<std::size_t> column_slot_;
};

struct GossSample {
  std::vector<Eigen::Index> rows;  // ascending
  Eigen::VectorXd multipliers;     // aligned with rows
};

GossSample goss_sample(const Eigen::VectorXd& gradients, double top_rate, double other_rate, std::uint64_t seed);

struct GbdtModel {
  double f0 = 0.0;
  std::vector<Tree> trees;
  std::vector<double> learning_rates;
  double power = 1.5;
  Objective objective = Objective::Tweedie;
  Eigen::Index n_columns = 0;
  std::vector<BinMapper> bins;
  GbdtConfig config;

  /// f0 plus the first n_trees scaled trees, accumulated stage by stage.
  Eigen::VectorXd predict_link(const Eigen::MatrixXd& x, std::size_t n_trees) const;
  Eigen::VectorXd predict_link(const Eigen::MatrixXd& x) const { return predict_link(x, trees.size()); }
};

Eigen::VectorXd predict_gbdt(const GbdtModel& model, const Eigen::MatrixXd& x);
Eigen::VectorXd predict_gbdt(const GbdtModel& model, const Eigen::MatrixXd& x, std::size_t n_trees);

struct ValidationSet {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

struct GbdtFitOptions {
  bool record_stages = false;
  std::optional<ValidationSet> validation;
};

struct GbdtTrace {
  /// Training loss after f0 (entry 0) and after every stage.
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::vector<Eigen::VectorXd> stage_link;
  std::size_t best_iteration = 0;
  std::vector<std::string> warnings;
};

struct GbdtFit {
  GbdtModel model;
  GbdtTrace trace;
};

GbdtFit fit_gbdt(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                 const GbdtConfig& config, const GbdtFitOptions& options = {});

/// Weighted training loss normalised by total weight: Tweedie kernel or squared error.
double objective_loss(Objective objective, double power, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w);

void save_gbdt(std::ostream& out, const GbdtModel& model);
GbdtModel load_gbdt(std::istream& in);

}  // namespace losscost
