#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace losscost {

/// Penalized stage settings. `alpha` is the overall strength, `l1_ratio` the
/// lasso share; the objective is the exposure-normalised likelihood kernel
/// plus alpha * ((1 - l1_ratio)/2 |b|^2 + l1_ratio |b|_1).
struct ElasticNetConfig {
  double alpha = 0.0;
  double l1_ratio = 0.5;
  double coef_threshold = 0.0;
  double power = 1.5;
  std::size_t max_iter = 5000;
  double tol = 1e-7;

  void validate() const;
};

enum class GlmStage { Penalized, Refit };

struct GlmModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd center;  // stage-1 column means
  Eigen::VectorXd scale;   // stage-1 column standard deviations (0 marks a dropped constant column)
  std::vector<bool> selected;
  double power = 1.5;
  GlmStage stage = GlmStage::Refit;

  Eigen::Index width() const { return coefficients.size(); }
  /// Standardizes first when the model is in the penalized stage.
  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

struct GlmDiagnostics {
  std::size_t iterations = 0;
  double gradient_norm = 0.0;  // KKT residual (stage 1) or max-abs gradient (stage 2)
  bool converged = false;
  bool singular_hessian = false;
  std::vector<double> objective_trace;
  std::vector<std::string> warnings;
};

struct GlmFit {
  GlmModel model;
  GlmDiagnostics diagnostics;
};

/// Stage 1: proximal gradient with backtracking on standardized columns.
/// Throws NotConverged when the KKT residual stays above 10 * tol.
GlmFit fit_penalized(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                     const ElasticNetConfig& config);

/// Penalized objective at (intercept, beta) on already-standardized columns.
double penalized_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                           double intercept, const Eigen::VectorXd& beta, const ElasticNetConfig& config);

/// Per-coordinate subgradient optimality residuals of a penalized model on its
/// training data; entry 0 is the intercept. Dropped constant columns report 0.
Eigen::VectorXd kkt_residuals(const GlmModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w, const ElasticNetConfig& config);

struct Selection {
  std::vector<bool> mask;
  bool empty = false;  // EmptySelection warning
};

/// Selects every column of a feature when any of its standardized
/// coefficients exceeds the threshold in absolute value.
Selection select_features(const GlmModel& penalized, double threshold,
                          std::span<const std::size_t> column_feature);

struct RefitOptions {
  std::size_t max_iter = 200;
  double tol = 1e-9;
};

/// Stage 2: unpenalized damped Newton on the selected original-scale columns.
/// Within a selected feature group whose columns sum to one on every row, the
/// most frequent column is held at zero as the reference level.
GlmFit refit_unpenalized(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                         const std::vector<bool>& selected, double power,
                         std::span<const std::size_t> column_feature = {}, const RefitOptions& options = {});

struct TwoStageFit {
  GlmFit penalized;
  Selection selection;
  GlmFit refit;
};

TwoStageFit fit_two_stage(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                          const ElasticNetConfig& config, std::span<const std::size_t> column_feature);

void save_glm(std::ostream& out, const GlmModel& model);
GlmModel load_glm(std::istream& in);

}  // namespace losscost
