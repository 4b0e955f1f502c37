#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "losscost/config.hpp"

namespace losscost {

enum class FeatureKind { Numeric, Categorical, Binary };
enum class Coverage { BG, BP, LIAB };
enum class MissingPolicy { MeanImpute, IndicatorPlusZero };

std::string to_string(FeatureKind kind);
std::string to_string(Coverage coverage);
std::string to_string(MissingPolicy policy);
FeatureKind parse_feature_kind(const std::string& text);
Coverage parse_coverage(const std::string& text);
MissingPolicy parse_missing_policy(const std::string& text);

inline constexpr const char* kInHouseBlock = "in-house";
inline constexpr const char* kInsurTechBlock = "insurtech";

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  std::vector<std::string> categories;  // categorical only
  double fill_rate = 1.0;
  std::string block;  // "in-house", "insurtech" or empty

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// Column naming plus the declared features of a portfolio file.
struct Schema {
  std::string id_column = "policy_id";
  std::string response_column = "loss_cost";
  std::string exposure_column = "exposure";
  std::string coverage_column = "coverage";
  std::vector<FeatureSpec> features;

  static Schema from_config(const Config& config);
  Config to_config() const;
};

/// Column-stored policy table. Missing cells are NaN; categorical cells hold the
/// category index as a double.
struct PortfolioTable {
  std::vector<FeatureSpec> features;
  std::vector<Eigen::VectorXd> columns;
  Eigen::VectorXd response;
  Eigen::VectorXd exposure;
  std::vector<Coverage> coverage;
  std::vector<std::string> id;

  Eigen::Index rows() const { return response.size(); }

  /// Throws on any broken invariant (lengths, signs, category codes).
  void validate() const;
  void refresh_fill_rates();

  std::optional<std::size_t> feature_index(const std::string& name) const;
  std::vector<std::string> feature_names() const;
  std::vector<std::string> block_features(const std::string& block) const;

  PortfolioTable subset(std::span<const Eigen::Index> rows) const;
  PortfolioTable select(const std::vector<std::string>& names) const;
  PortfolioTable filter_coverage(Coverage tag) const;
};

PortfolioTable load_table(const std::filesystem::path& path, const Schema& schema);
PortfolioTable read_table(std::istream& in, const Schema& schema);
void write_table(std::ostream& out, const PortfolioTable& table, const Schema& schema);

enum class ColumnRole { Value, OneHot, MissingIndicator };

struct EncodedColumn {
  std::string name;
  std::size_t feature = 0;
  ColumnRole role = ColumnRole::Value;
  int category = -1;
};

/// Everything needed to map a table onto design-matrix columns; fitted on
/// training data and reused for any later table.
struct Encoding {
  MissingPolicy policy = MissingPolicy::IndicatorPlusZero;
  std::vector<FeatureSpec> features;
  std::vector<double> fill_value;  // per feature; imputation mean or zero
  std::vector<bool> indicator;     // per feature; missingness column appended
  std::vector<EncodedColumn> columns;

  Eigen::Index width() const { return static_cast<Eigen::Index>(columns.size()); }
  /// Feature index of every column, for group-wise operations.
  std::vector<std::size_t> column_feature() const;
  std::vector<std::string> column_names() const;
  std::vector<std::size_t> columns_of(std::size_t feature) const;
};

struct EncodedTable {
  Eigen::MatrixXd matrix;
  Encoding encoding;
};

Encoding fit_encoding(const PortfolioTable& table, MissingPolicy policy);
/// Throws ColumnMismatch when the table lacks a feature the encoding expects.
Eigen::MatrixXd apply_encoding(const Encoding& encoding, const PortfolioTable& table);
EncodedTable encode(const PortfolioTable& table, MissingPolicy policy);

/// Recovers the original cell of `feature` in `row`; nullopt for cells that were missing.
std::optional<double> decode_cell(const Encoding& encoding, const Eigen::MatrixXd& matrix,
                                  Eigen::Index row, std::size_t feature);

void write_encoding(std::ostream& out, const Encoding& encoding);
Encoding read_encoding(std::istream& in);

enum class SplitKind { TrainTest, KFold };

struct SplitPlan {
  SplitKind kind = SplitKind::KFold;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  std::size_t k = 10;
  // TrainTest: 0 = train, 1 = test. KFold: fold index.
  std::vector<std::size_t> fold_assignment;

  std::size_t folds() const { return kind == SplitKind::TrainTest ? 2 : k; }
  std::vector<Eigen::Index> rows_in(std::size_t fold) const;
  std::vector<Eigen::Index> rows_not_in(std::size_t fold) const;
};

/// Seeded, zero-loss-stratified assignment of rows to folds.
SplitPlan make_splits(const PortfolioTable& table, SplitPlan plan);

}  // namespace losscost
