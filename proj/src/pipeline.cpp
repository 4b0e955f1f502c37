#include "losscost/pipeline.hpp"

#include <cmath>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

#include "losscost/error.hpp"
#include "losscost/io.hpp"

namespace losscost {

std::string to_string(RecipeKind kind) {
  switch (kind) {
    case RecipeKind::GlmElasticNet: return "glm_elasticnet";
    case RecipeKind::Gbdt: return "gbdt";
    case RecipeKind::Constant: return "constant";
  }
  return "gbdt";
}

RecipeKind parse_recipe(const std::string& text) {
  if (text == "glm_elasticnet" || text == "glm") return RecipeKind::GlmElasticNet;
  if (text == "gbdt") return RecipeKind::Gbdt;
  if (text == "constant") return RecipeKind::Constant;
  throw Error(ErrorCode::InvalidConfig, "unknown recipe: " + text);
}

Eigen::MatrixXd FittedModel::design(const PortfolioTable& table) const { return apply_encoding(encoding, table); }

Eigen::VectorXd FittedModel::link_from_design(const Eigen::MatrixXd& x) const {
  switch (kind) {
    case RecipeKind::GlmElasticNet: return glm->linear_predictor(x);
    case RecipeKind::Gbdt: return gbdt->predict_link(x);
    case RecipeKind::Constant: break;
  }
  return Eigen::VectorXd::Constant(x.rows(), std::log(constant));
}

Eigen::VectorXd FittedModel::predict_link(const PortfolioTable& table) const { return link_from_design(design(table)); }

Eigen::VectorXd FittedModel::predict(const PortfolioTable& table) const {
  switch (kind) {
    case RecipeKind::GlmElasticNet: return glm->predict(design(table));
    case RecipeKind::Gbdt: return predict_gbdt(*gbdt, design(table));
    case RecipeKind::Constant: break;
  }
  return Eigen::VectorXd::Constant(table.rows(), constant);
}

std::vector<std::string> FittedModel::feature_names() const {
  std::vector<std::string> out;
  for (const auto& f : encoding.features) out.push_back(f.name);
  return out;
}

FittedModel fit_model(const PortfolioTable& train, const ModelSpec& spec, std::uint64_t seed) {
  const PortfolioTable table = spec.features.empty() ? train : train.select(spec.features);
  FittedModel model;
  model.kind = spec.kind;
  model.encoding = fit_encoding(table, spec.missing);
  const Eigen::VectorXd& y = table.response;
  const Eigen::VectorXd& w = table.exposure;

  switch (spec.kind) {
    case RecipeKind::Constant: {
      model.constant = spec.constant > 0.0 ? spec.constant : w.dot(y) / w.sum();
      if (!(model.constant > 0.0)) throw Error(ErrorCode::DegenerateResponse, "constant model needs a positive mean");
      break;
    }
    case RecipeKind::GlmElasticNet: {
      const Eigen::MatrixXd x = apply_encoding(model.encoding, table);
      const auto groups = model.encoding.column_feature();
      auto fit = fit_two_stage(x, y, w, spec.glm, groups);
      model.glm = std::move(fit.refit.model);
      for (const auto& m : fit.penalized.diagnostics.warnings) model.warnings.push_back(m);
      for (const auto& m : fit.refit.diagnostics.warnings) model.warnings.push_back(m);
      break;
    }
    case RecipeKind::Gbdt: {
      const Eigen::MatrixXd x = apply_encoding(model.encoding, table);
      GbdtConfig config = spec.gbdt;
      config.seed = seed;
      auto fit = fit_gbdt(x, y, w, config);
      model.gbdt = std::move(fit.model);
      for (const auto& m : fit.trace.warnings) model.warnings.push_back(m);
      break;
    }
  }
  return model;
}

Recipe make_recipe(const ModelSpec& spec) {
  return [spec](const PortfolioTable& train, std::uint64_t seed) -> Predictor {
    auto model = std::make_shared<FittedModel>(fit_model(train, spec, seed));
    return [model](const PortfolioTable& t) { return model->predict(t); };
  };
}

void save_model(std::ostream& out, const FittedModel& model) {
  out << "losscost-model\t1\n";
  out << "recipe\t" << to_string(model.kind) << '\n';
  write_encoding(out, model.encoding);
  switch (model.kind) {
    case RecipeKind::GlmElasticNet: save_glm(out, *model.glm); break;
    case RecipeKind::Gbdt: save_gbdt(out, *model.gbdt); break;
    case RecipeKind::Constant: out << "constant\t" << format_exact(model.constant) << '\n'; break;
  }
}

FittedModel load_model(std::istream& in) {
  auto expect = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "truncated model file");
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.substr(0, tab) != key) {
      throw Error(ErrorCode::ParseError, "expected '" + key + "' record, got '" + line + "'");
    }
    return line.substr(tab + 1);
  };
  if (expect("losscost-model") != "1") throw Error(ErrorCode::ParseError, "unsupported model file version");
  FittedModel model;
  model.kind = parse_recipe(expect("recipe"));
  model.encoding = read_encoding(in);
  switch (model.kind) {
    case RecipeKind::GlmElasticNet: model.glm = load_glm(in); break;
    case RecipeKind::Gbdt: model.gbdt = load_gbdt(in); break;
    case RecipeKind::Constant: model.constant = parse_double(expect("constant"), "constant"); break;
  }
  return model;
}

}  // namespace losscost
