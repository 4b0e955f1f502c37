#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "losscost/evaluate.hpp"
#include "losscost/explain.hpp"
#include "losscost/variance.hpp"

namespace losscost {

/// One line of a report file: model, dataset, metric, value, n (tab separated).
struct ReportRecord {
  std::string model;
  std::string dataset;
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;

  friend bool operator==(const ReportRecord&, const ReportRecord&) = default;
};

using ReportMeta = std::vector<std::pair<std::string, std::string>>;

/// Gini, PE, RMSE and MAE records of an evaluation.
std::vector<ReportRecord> records_of(const EvalReport& report);
/// Terms as fractions of var_y, plus var_y itself.
std::vector<ReportRecord> records_of(const DecompositionReport& report, const std::string& label);

void write_report(std::ostream& out, const ReportMeta& meta, const std::vector<ReportRecord>& records);
std::vector<ReportRecord> read_report(std::istream& in);

/// CSV: bin, exposure, rows, avg_observed, avg_current, avg_new.
void write_lift(std::ostream& out, const LiftChart& chart);
/// CSV: feature, score.
void write_importance(std::ostream& out, const ImportanceVector& importance);
/// CSV of the k largest |attribution| entries of one row: rank, feature, value, attribution.
void write_top_attributions(std::ostream& out, const ShapMatrix& shap, Eigen::Index row,
                            const std::vector<std::string>& values, std::size_t k = 20);
/// CSV: edge (or category), effect, rows.
void write_ale(std::ostream& out, const AleCurve& curve);

}  // namespace losscost
