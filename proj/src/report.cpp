#include "losscost/report.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "losscost/config.hpp"
#include "losscost/error.hpp"
#include "losscost/io.hpp"

namespace losscost {

std::vector<ReportRecord> records_of(const EvalReport& r) {
  return {{r.label, r.dataset, "gini", r.gini, r.n},
          {r.label, r.dataset, "pe", r.pe, r.n},
          {r.label, r.dataset, "rmse", r.rmse, r.n},
          {r.label, r.dataset, "mae", r.mae, r.n}};
}

std::vector<ReportRecord> records_of(const DecompositionReport& r, const std::string& label) {
  const double v = r.var_y;
  auto frac = [&](double t) { return v > 0.0 ? t / v : 0.0; };
  std::vector<ReportRecord> out{{label, r.estimator, "var_y", v, r.n},
                                {label, r.estimator, "noise_fraction", frac(r.term_noise), r.n},
                                {label, r.estimator, "gain_fraction", frac(r.term_gain), r.n},
                                {label, r.estimator, "base_fraction", frac(r.term_base), r.n}};
  if (r.three_term) out.push_back({label, r.estimator, "gain_binned_fraction", frac(r.gain_binned), r.n});
  if (r.standard_error > 0.0) out.push_back({label, r.estimator, "sum_standard_error", r.standard_error, r.n});
  return out;
}

void write_report(std::ostream& out, const ReportMeta& meta, const std::vector<ReportRecord>& records) {
  for (const auto& [k, v] : meta) out << "# " << k << '\t' << v << '\n';
  out << "model\tdataset\tmetric\tvalue\tn\n";
  for (const auto& r : records) {
    out << r.model << '\t' << r.dataset << '\t' << r.metric << '\t' << format_exact(r.value) << '\t' << r.n << '\n';
  }
}

std::vector<ReportRecord> read_report(std::istream& in) {
  std::vector<ReportRecord> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream s(line);
    std::string cell;
    while (std::getline(s, cell, '\t')) f.push_back(cell);
    if (f.size() != 5) throw Error(ErrorCode::ParseError, "bad report record: " + line);
    out.push_back({f[0], f[1], f[2], parse_double(f[3], "value"), static_cast<std::size_t>(parse_int(f[4], "n"))});
  }
  return out;
}

void write_lift(std::ostream& out, const LiftChart& chart) {
  out << "bin,exposure,rows,avg_observed,avg_current,avg_new\n";
  for (std::size_t b = 0; b < chart.bins.size(); ++b) {
    const auto& x = chart.bins[b];
    out << b + 1 << ',' << format_exact(x.exposure) << ',' << x.rows << ',' << format_exact(x.avg_observed) << ','
        << format_exact(x.avg_current) << ',' << format_exact(x.avg_new) << '\n';
  }
}

void write_importance(std::ostream& out, const ImportanceVector& importance) {
  out << "feature," << importance.method << '\n';
  for (const auto& s : importance.scores) out << s.name << ',' << format_exact(s.score) << '\n';
}

void write_top_attributions(std::ostream& out, const ShapMatrix& shap, Eigen::Index row,
                            const std::vector<std::string>& values, std::size_t k) {
  std::vector<Eigen::Index> order;
  for (Eigen::Index j = 0; j < shap.values.cols(); ++j) {
    if (shap.values(row, j) != 0.0) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(shap.values(row, a)) > std::abs(shap.values(row, b));
  });
  if (order.size() > k) order.resize(k);
  out << "# base_value," << format_exact(shap.base_value) << '\n';
  out << "rank,feature,value,attribution\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto j = static_cast<std::size_t>(order[r]);
    out << r + 1 << ',' << shap.names[j] << ',' << (j < values.size() ? values[j] : "") << ','
        << format_exact(shap.values(row, order[r])) << '\n';
  }
}

void write_ale(std::ostream& out, const AleCurve& curve) {
  out << "# feature," << curve.feature << '\n';
  out << "# centering," << format_exact(curve.centering) << '\n';
  if (curve.categorical) {
    out << "category,effect,rows\n";
    for (std::size_t k = 0; k < curve.effect.size(); ++k) {
      out << curve.labels[k] << ',' << format_exact(curve.effect[k]) << ',' << curve.bin_rows[k] << '\n';
    }
    return;
  }
  out << "edge,effect,rows\n";
  for (std::size_t k = 0; k < curve.edges.size(); ++k) {
    // rows column: observations in the bin ending at this edge
    const std::size_t rows = k == 0 ? 0 : curve.bin_rows[k - 1];
    out << format_exact(curve.edges[k]) << ',' << format_exact(curve.effect[k]) << ',' << rows << '\n';
  }
}

}  // namespace losscost
