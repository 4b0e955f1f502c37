#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "losscost/evaluate.hpp"
#include "losscost/gbdt.hpp"
#include "losscost/glm.hpp"
#include "losscost/table.hpp"

namespace losscost {

enum class RecipeKind { GlmElasticNet, Gbdt, Constant };

std::string to_string(RecipeKind kind);
RecipeKind parse_recipe(const std::string& text);

/// How to turn a training table into a predictor: which features, how missing
/// cells are encoded, and the model family with its settings. Exposure is the
/// observation weight throughout.
struct ModelSpec {
  RecipeKind kind = RecipeKind::Gbdt;
  std::vector<std::string> features;  // empty means every feature in the table
  MissingPolicy missing = MissingPolicy::IndicatorPlusZero;
  ElasticNetConfig glm;
  GbdtConfig gbdt;
  /// Constant recipe: the prediction; 0 uses the exposure-weighted training mean.
  double constant = 0.0;
};

struct FittedModel {
  RecipeKind kind = RecipeKind::Constant;
  Encoding encoding;
  std::optional<GlmModel> glm;
  std::optional<GbdtModel> gbdt;
  double constant = 0.0;
  std::vector<std::string> warnings;

  Eigen::MatrixXd design(const PortfolioTable& table) const;
  Eigen::VectorXd predict(const PortfolioTable& table) const;
  /// Log-link predictions for GLM and GBDT (the constant model reports its log).
  Eigen::VectorXd predict_link(const PortfolioTable& table) const;
  /// Link-scale predictions for an already encoded design matrix.
  Eigen::VectorXd link_from_design(const Eigen::MatrixXd& x) const;
  std::vector<std::string> feature_names() const;
};

FittedModel fit_model(const PortfolioTable& train, const ModelSpec& spec, std::uint64_t seed);
Recipe make_recipe(const ModelSpec& spec);

void save_model(std::ostream& out, const FittedModel& model);
FittedModel load_model(std::istream& in);

}  // namespace losscost
