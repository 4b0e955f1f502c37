#include "losscost/table.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "losscost/error.hpp"
#include "losscost/io.hpp"

namespace losscost {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

std::vector<EncodedColumn> build_columns(const std::vector<FeatureSpec>& features,
                                         const std::vector<bool>& indicator) {
  std::vector<EncodedColumn> columns;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& spec = features[f];
    if (spec.kind == FeatureKind::Categorical) {
      for (std::size_t c = 0; c < spec.categories.size(); ++c) {
        columns.push_back({spec.name + "=" + spec.categories[c], f, ColumnRole::OneHot,
                           static_cast<int>(c)});
      }
      continue;
    }
    columns.push_back({spec.name, f, ColumnRole::Value, -1});
    if (indicator[f]) columns.push_back({spec.name + "__missing", f, ColumnRole::MissingIndicator, -1});
  }
  return columns;
}

}  // namespace

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Numeric: return "numeric";
    case FeatureKind::Categorical: return "categorical";
    case FeatureKind::Binary: return "binary";
  }
  return "numeric";
}

std::string to_string(Coverage coverage) {
  switch (coverage) {
    case Coverage::BG: return "BG";
    case Coverage::BP: return "BP";
    case Coverage::LIAB: return "LIAB";
  }
  return "BG";
}

std::string to_string(MissingPolicy policy) {
  return policy == MissingPolicy::MeanImpute ? "mean_impute" : "indicator_plus_zero";
}

FeatureKind parse_feature_kind(const std::string& text) {
  if (text == "numeric") return FeatureKind::Numeric;
  if (text == "categorical") return FeatureKind::Categorical;
  if (text == "binary") return FeatureKind::Binary;
  throw Error(ErrorCode::InvalidConfig, "unknown feature kind '" + text + "'");
}

Coverage parse_coverage(const std::string& text) {
  if (text == "BG") return Coverage::BG;
  if (text == "BP") return Coverage::BP;
  if (text == "LIAB") return Coverage::LIAB;
  throw Error(ErrorCode::TypeMismatch, "unknown coverage tag '" + text + "'");
}

MissingPolicy parse_missing_policy(const std::string& text) {
  if (text == "mean_impute") return MissingPolicy::MeanImpute;
  if (text == "indicator_plus_zero") return MissingPolicy::IndicatorPlusZero;
  throw Error(ErrorCode::InvalidConfig, "unknown missing policy '" + text + "'");
}

Schema Schema::from_config(const Config& config) {
  Schema schema;
  schema.id_column = config.get_string("columns", "id", schema.id_column);
  schema.response_column = config.get_string("columns", "response", schema.response_column);
  schema.exposure_column = config.get_string("columns", "exposure", schema.exposure_column);
  schema.coverage_column = config.get_string("columns", "coverage", schema.coverage_column);
  const std::string prefix = "feature.";
  for (const auto& section : config.sections()) {
    if (section.name.rfind(prefix, 0) != 0) continue;
    FeatureSpec spec;
    spec.name = section.name.substr(prefix.size());
    spec.kind = parse_feature_kind(config.get_string(section.name, "kind", "numeric"));
    spec.categories = config.get_list(section.name, "categories");
    spec.block = config.get_string(section.name, "block", "");
    if (spec.kind == FeatureKind::Categorical && spec.categories.empty()) {
      throw Error(ErrorCode::InvalidConfig, "categorical feature '" + spec.name + "' has no categories");
    }
    if (spec.kind != FeatureKind::Categorical && !spec.categories.empty()) {
      throw Error(ErrorCode::InvalidConfig, "non-categorical feature '" + spec.name + "' lists categories");
    }
    schema.features.push_back(std::move(spec));
  }
  return schema;
}

Config Schema::to_config() const {
  Config config;
  config.set("columns", "id", id_column);
  config.set("columns", "response", response_column);
  config.set("columns", "exposure", exposure_column);
  config.set("columns", "coverage", coverage_column);
  for (const auto& f : features) {
    const std::string section = "feature." + f.name;
    config.set(section, "kind", to_string(f.kind));
    if (!f.categories.empty()) {
      std::string joined;
      for (std::size_t i = 0; i < f.categories.size(); ++i) {
        joined += (i ? "," : "") + f.categories[i];
      }
      config.set(section, "categories", joined);
    }
    if (!f.block.empty()) config.set(section, "block", f.block);
  }
  return config;
}

void PortfolioTable::validate() const {
  const Eigen::Index n = rows();
  if (exposure.size() != n || static_cast<Eigen::Index>(coverage.size()) != n ||
      static_cast<Eigen::Index>(id.size()) != n || columns.size() != features.size()) {
    throw Error(ErrorCode::ColumnMismatch, "column lengths disagree");
  }
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& spec = features[f];
    if (columns[f].size() != n) throw Error(ErrorCode::ColumnMismatch, "column '" + spec.name + "' length");
    if (spec.kind == FeatureKind::Categorical && spec.categories.empty()) {
      throw Error(ErrorCode::InvalidConfig, "categorical feature '" + spec.name + "' has no categories");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = columns[f][i];
      if (std::isnan(v)) continue;
      if (spec.kind == FeatureKind::Categorical &&
          (v < 0 || v >= static_cast<double>(spec.categories.size()) || v != std::floor(v))) {
        throw Error(ErrorCode::TypeMismatch, "bad category code in '" + spec.name + "'");
      }
      if (spec.kind == FeatureKind::Binary && v != 0.0 && v != 1.0) {
        throw Error(ErrorCode::TypeMismatch, "binary feature '" + spec.name + "' holds " + format_number(v));
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(response[i] >= 0.0)) {
      throw Error(ErrorCode::NegativeResponse, "row " + std::to_string(i) + " response " + format_number(response[i]));
    }
    if (!(exposure[i] > 0.0)) {
      throw Error(ErrorCode::NonPositiveExposure, "row " + std::to_string(i) + " exposure " + format_number(exposure[i]));
    }
  }
}

void PortfolioTable::refresh_fill_rates() {
  const double n = static_cast<double>(rows());
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto observed = (columns[f].array() == columns[f].array()).count();
    features[f].fill_rate = n > 0 ? static_cast<double>(observed) / n : 1.0;
  }
}

std::optional<std::size_t> PortfolioTable::feature_index(const std::string& name) const {
  for (std::size_t f = 0; f < features.size(); ++f) {
    if (features[f].name == name) return f;
  }
  return std::nullopt;
}

std::vector<std::string> PortfolioTable::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

std::vector<std::string> PortfolioTable::block_features(const std::string& block) const {
  std::vector<std::string> names;
  for (const auto& f : features) {
    if (f.block == block) names.push_back(f.name);
  }
  return names;
}

PortfolioTable PortfolioTable::subset(std::span<const Eigen::Index> rows_to_keep) const {
  PortfolioTable out;
  out.features = features;
  const auto m = static_cast<Eigen::Index>(rows_to_keep.size());
  out.response.resize(m);
  out.exposure.resize(m);
  out.columns.assign(features.size(), Eigen::VectorXd(m));
  out.coverage.reserve(rows_to_keep.size());
  out.id.reserve(rows_to_keep.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = rows_to_keep[static_cast<std::size_t>(r)];
    out.response[r] = response[i];
    out.exposure[r] = exposure[i];
    for (std::size_t f = 0; f < features.size(); ++f) out.columns[f][r] = columns[f][i];
    out.coverage.push_back(coverage[static_cast<std::size_t>(i)]);
    out.id.push_back(id[static_cast<std::size_t>(i)]);
  }
  out.refresh_fill_rates();
  return out;
}

PortfolioTable PortfolioTable::select(const std::vector<std::string>& names) const {
  PortfolioTable out;
  out.response = response;
  out.exposure = exposure;
  out.coverage = coverage;
  out.id = id;
  for (const auto& name : names) {
    const auto f = feature_index(name);
    if (!f) throw Error(ErrorCode::MissingColumn, "feature '" + name + "' not in table");
    out.features.push_back(features[*f]);
    out.columns.push_back(columns[*f]);
  }
  return out;
}

PortfolioTable PortfolioTable::filter_coverage(Coverage tag) const {
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    if (coverage[i] == tag) keep.push_back(static_cast<Eigen::Index>(i));
  }
  return subset(keep);
}

PortfolioTable read_table(std::istream& in, const Schema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MissingColumn, "empty file, no header");
  const auto header = split_csv_line(line);
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    return std::nullopt;
  };
  auto require = [&](const std::string& name) {
    const auto c = find(name);
    if (!c) throw Error(ErrorCode::MissingColumn, "column '" + name + "' absent from header");
    return *c;
  };
  const std::size_t response_col = require(schema.response_column);
  const std::size_t exposure_col = require(schema.exposure_column);
  const auto id_col = find(schema.id_column);
  const auto coverage_col = find(schema.coverage_column);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(require(f.name));

  std::vector<double> response, exposure;
  std::vector<std::vector<double>> cells(schema.features.size());
  PortfolioTable table;
  table.features = schema.features;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    const std::string where = " at line " + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::TypeMismatch, "expected " + std::to_string(header.size()) + " fields" + where);
    }
    const auto& r = fields[response_col];
    if (is_missing(r)) throw Error(ErrorCode::TypeMismatch, "missing response" + where);
    const double y = parse_double(r, schema.response_column + where);
    if (!(y >= 0.0)) throw Error(ErrorCode::NegativeResponse, "response " + r + where);
    const auto& e = fields[exposure_col];
    if (is_missing(e)) throw Error(ErrorCode::TypeMismatch, "missing exposure" + where);
    const double x = parse_double(e, schema.exposure_column + where);
    if (!(x > 0.0)) throw Error(ErrorCode::NonPositiveExposure, "exposure " + e + where);
    response.push_back(y);
    exposure.push_back(x);
    table.id.push_back(id_col ? fields[*id_col] : std::to_string(table.id.size()));
    table.coverage.push_back(coverage_col ? parse_coverage(fields[*coverage_col]) : Coverage::BG);
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const auto& spec = schema.features[f];
      const auto& cell = fields[feature_cols[f]];
      if (is_missing(cell)) {
        cells[f].push_back(kMissing);
        continue;
      }
      if (spec.kind == FeatureKind::Categorical) {
        const auto it = std::find(spec.categories.begin(), spec.categories.end(), cell);
        if (it == spec.categories.end()) {
          throw Error(ErrorCode::TypeMismatch, "unknown category '" + cell + "' for " + spec.name + where);
        }
        cells[f].push_back(static_cast<double>(it - spec.categories.begin()));
        continue;
      }
      const double v = parse_double(cell, spec.name + where);
      if (spec.kind == FeatureKind::Binary && v != 0.0 && v != 1.0) {
        throw Error(ErrorCode::TypeMismatch, "binary feature " + spec.name + " holds '" + cell + "'" + where);
      }
      cells[f].push_back(v);
    }
  }
  table.response = Eigen::Map<Eigen::VectorXd>(response.data(), static_cast<Eigen::Index>(response.size()));
  table.exposure = Eigen::Map<Eigen::VectorXd>(exposure.data(), static_cast<Eigen::Index>(exposure.size()));
  for (auto& c : cells) {
    table.columns.emplace_back(Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())));
  }
  table.refresh_fill_rates();
  table.validate();
  return table;
}

PortfolioTable load_table(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_table(in, schema);
}

void write_table(std::ostream& out, const PortfolioTable& table, const Schema& schema) {
  out << csv_escape(schema.id_column) << ',' << csv_escape(schema.coverage_column);
  for (const auto& f : table.features) out << ',' << csv_escape(f.name);
  out << ',' << csv_escape(schema.exposure_column) << ',' << csv_escape(schema.response_column) << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const auto row = static_cast<std::size_t>(i);
    out << csv_escape(table.id[row]) << ',' << to_string(table.coverage[row]);
    for (std::size_t f = 0; f < table.features.size(); ++f) {
      out << ',';
      const double v = table.columns[f][i];
      if (std::isnan(v)) {
        out << "NA";
      } else if (table.features[f].kind == FeatureKind::Categorical) {
        out << csv_escape(table.features[f].categories[static_cast<std::size_t>(v)]);
      } else {
        out << format_number(v);
      }
    }
    out << ',' << format_number(table.exposure[i]) << ',' << format_number(table.response[i]) << '\n';
  }
}

std::vector<std::size_t> Encoding::column_feature() const {
  std::vector<std::size_t> out;
  for (const auto& c : columns) out.push_back(c.feature);
  return out;
}

std::vector<std::string> Encoding::column_names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

std::vector<std::size_t> Encoding::columns_of(std::size_t feature) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].feature == feature) out.push_back(c);
  }
  return out;
}

Encoding fit_encoding(const PortfolioTable& table, MissingPolicy policy) {
  Encoding enc;
  enc.policy = policy;
  enc.features = table.features;
  for (std::size_t f = 0; f < table.features.size(); ++f) {
    const auto& spec = table.features[f];
    const auto& col = table.columns[f];
    double fill = 0.0;
    bool indicator = false;
    if (spec.kind != FeatureKind::Categorical) {
      const auto observed = (col.array() == col.array()).count();
      if (policy == MissingPolicy::MeanImpute && observed > 0) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < col.size(); ++i) {
          if (!std::isnan(col[i])) sum += col[i];
        }
        fill = sum / static_cast<double>(observed);
      }
      indicator = policy == MissingPolicy::IndicatorPlusZero && observed < col.size();
    }
    enc.fill_value.push_back(fill);
    enc.indicator.push_back(indicator);
  }
  enc.columns = build_columns(enc.features, enc.indicator);
  return enc;
}

Eigen::MatrixXd apply_encoding(const Encoding& enc, const PortfolioTable& table) {
  const Eigen::Index n = table.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, enc.width());
  std::vector<std::size_t> source(enc.features.size());
  for (std::size_t f = 0; f < enc.features.size(); ++f) {
    const auto& spec = enc.features[f];
    const auto idx = table.feature_index(spec.name);
    if (!idx) throw Error(ErrorCode::ColumnMismatch, "table lacks feature '" + spec.name + "'");
    const auto& have = table.features[*idx];
    if (have.kind != spec.kind || have.categories != spec.categories) {
      throw Error(ErrorCode::ColumnMismatch, "feature '" + spec.name + "' differs from training schema");
    }
    source[f] = *idx;
  }
  for (Eigen::Index c = 0; c < enc.width(); ++c) {
    const auto& column = enc.columns[static_cast<std::size_t>(c)];
    const auto& values = table.columns[source[column.feature]];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = values[i];
      switch (column.role) {
        case ColumnRole::Value:
          out(i, c) = std::isnan(v) ? enc.fill_value[column.feature] : v;
          break;
        case ColumnRole::OneHot:
          out(i, c) = (!std::isnan(v) && static_cast<int>(v) == column.category) ? 1.0 : 0.0;
          break;
        case ColumnRole::MissingIndicator:
          out(i, c) = std::isnan(v) ? 1.0 : 0.0;
          break;
      }
    }
  }
  return out;
}

EncodedTable encode(const PortfolioTable& table, MissingPolicy policy) {
  EncodedTable out;
  out.encoding = fit_encoding(table, policy);
  out.matrix = apply_encoding(out.encoding, table);
  return out;
}

std::optional<double> decode_cell(const Encoding& enc, const Eigen::MatrixXd& matrix,
                                  Eigen::Index row, std::size_t feature) {
  const auto cols = enc.columns_of(feature);
  if (enc.features[feature].kind == FeatureKind::Categorical) {
    for (auto c : cols) {
      if (matrix(row, static_cast<Eigen::Index>(c)) == 1.0) return enc.columns[c].category;
    }
    return std::nullopt;
  }
  std::optional<double> value;
  for (auto c : cols) {
    const double v = matrix(row, static_cast<Eigen::Index>(c));
    if (enc.columns[c].role == ColumnRole::MissingIndicator && v == 1.0) return std::nullopt;
    if (enc.columns[c].role == ColumnRole::Value) value = v;
  }
  return value;
}

void write_encoding(std::ostream& out, const Encoding& enc) {
  out << "encoding\t" << to_string(enc.policy) << '\t' << enc.features.size() << '\n';
  for (std::size_t f = 0; f < enc.features.size(); ++f) {
    const auto& spec = enc.features[f];
    out << "feature\t" << spec.name << '\t' << to_string(spec.kind) << '\t' << spec.block << '\t'
        << format_exact(spec.fill_rate) << '\t' << format_exact(enc.fill_value[f]) << '\t'
        << (enc.indicator[f] ? 1 : 0) << '\t' << spec.categories.size();
    for (const auto& c : spec.categories) out << '\t' << c;
    out << '\n';
  }
}

Encoding read_encoding(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "missing encoding block");
  auto head = split_tabs(line);
  if (head.size() != 3 || head[0] != "encoding") throw Error(ErrorCode::ParseError, "bad encoding header");
  Encoding enc;
  enc.policy = parse_missing_policy(head[1]);
  const auto n = static_cast<std::size_t>(parse_int(head[2], "encoding feature count"));
  for (std::size_t f = 0; f < n; ++f) {
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "truncated encoding block");
    const auto fields = split_tabs(line);
    if (fields.size() < 8 || fields[0] != "feature") throw Error(ErrorCode::ParseError, "bad feature record");
    FeatureSpec spec;
    spec.name = fields[1];
    spec.kind = parse_feature_kind(fields[2]);
    spec.block = fields[3];
    spec.fill_rate = parse_double(fields[4], "fill_rate");
    const auto ncat = static_cast<std::size_t>(parse_int(fields[7], "category count"));
    if (fields.size() != 8 + ncat) throw Error(ErrorCode::ParseError, "category count mismatch");
    spec.categories.assign(fields.begin() + 8, fields.end());
    enc.fill_value.push_back(parse_double(fields[5], "fill value"));
    enc.indicator.push_back(fields[6] == "1");
    enc.features.push_back(std::move(spec));
  }
  enc.columns = build_columns(enc.features, enc.indicator);
  return enc;
}

std::vector<Eigen::Index> SplitPlan::rows_in(std::size_t fold) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < fold_assignment.size(); ++i) {
    if (fold_assignment[i] == fold) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<Eigen::Index> SplitPlan::rows_not_in(std::size_t fold) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < fold_assignment.size(); ++i) {
    if (fold_assignment[i] != fold) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

SplitPlan make_splits(const PortfolioTable& table, SplitPlan plan) {
  const auto n = static_cast<std::size_t>(table.rows());
  if (plan.kind == SplitKind::KFold) {
    if (plan.k < 2) throw Error(ErrorCode::InvalidConfig, "k must be at least 2");
    if (plan.k > n) {
      throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(plan.k) + " exceeds " + std::to_string(n) + " rows");
    }
  } else if (!(plan.test_fraction > 0.0 && plan.test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "test_fraction must lie in (0,1)");
  }

  // Zero-loss rows first, then positive rows, each shuffled; dealing them out in
  // sequence keeps every fold's zero share within one row of the global share.
  std::vector<std::size_t> zeros, positives;
  for (std::size_t i = 0; i < n; ++i) {
    (table.response[static_cast<Eigen::Index>(i)] == 0.0 ? zeros : positives).push_back(i);
  }
  std::mt19937_64 rng(plan.seed);
  std::shuffle(zeros.begin(), zeros.end(), rng);
  std::shuffle(positives.begin(), positives.end(), rng);
  std::vector<std::size_t> order = std::move(zeros);
  order.insert(order.end(), positives.begin(), positives.end());

  plan.fold_assignment.assign(n, 0);
  if (plan.kind == SplitKind::KFold) {
    for (std::size_t i = 0; i < n; ++i) plan.fold_assignment[order[i]] = i % plan.k;
  } else {
    double acc = 0.5;
    for (std::size_t i = 0; i < n; ++i) {
      acc += plan.test_fraction;
      if (acc >= 1.0) {
        plan.fold_assignment[order[i]] = 1;
        acc -= 1.0;
      }
    }
  }
  return plan;
}

}  // namespace losscost
