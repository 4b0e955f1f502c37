#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "losscost/config.hpp"
#include "losscost/table.hpp"

namespace losscost {

struct CoverageProfile {
  Coverage tag = Coverage::BG;
  double share = 1.0;
  double zero_share = 0.965;
  double power = 1.34;
  double base_loss_cost = 500.0;
  /// Fixed Tweedie dispersion; 0 calibrates it so the expected zero share matches.
  double dispersion = 0.0;
};

/// Settings for the compound Poisson-Gamma portfolio generator. The in-house block
/// carries limit, building age, years in business, risk type and sprinkler; the
/// insurtech block carries review score (partly missing), traffic density, web
/// presence, business category and mutually exclusive violation flags.
struct GeneratorConfig {
  std::size_t rows = 10000;
  std::vector<CoverageProfile> coverages{CoverageProfile{}};
  double inhouse_signal = 1.0;
  double insurtech_signal = 1.0;
  std::size_t inhouse_noise = 0;
  std::size_t insurtech_noise = 0;
  /// Names of features allowed to move the mean; empty means all of them.
  std::vector<std::string> active_signals;
  double partial_exposure_share = 0.3;
  double review_fill_rate = 0.6;

  void validate() const;

  /// Named starting points: "bg", "bp", "liab" or "mixed".
  static GeneratorConfig preset(const std::string& name);
  /// Reads the [simulate] section on top of its `preset` key (default "bg").
  static GeneratorConfig from_config(const Config& config);
  void to_config(Config& config) const;
};

/// Per-row conditional moments known to the generator.
struct GroundTruth {
  Eigen::VectorXd mu;              // E[Y | all features]
  Eigen::VectorXd mu_inhouse;      // E[Y | in-house features]
  Eigen::VectorXd noise_variance;  // Var(Y | all features, exposure)
  Eigen::VectorXd gain_variance;   // Var(E[Y | all features] | in-house features)
  std::vector<double> dispersion;  // per coverage profile, in config order
};

struct SyntheticPortfolio {
  PortfolioTable table;
  Schema schema;
  GroundTruth truth;
};

SyntheticPortfolio synthesize_portfolio(const GeneratorConfig& config, std::uint64_t seed);

/// CSV with policy id followed by the ground-truth columns.
void write_ground_truth(std::ostream& out, const SyntheticPortfolio& portfolio);
GroundTruth read_ground_truth(std::istream& in);

}  // namespace losscost
