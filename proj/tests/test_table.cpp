#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "losscost/config.hpp"
#include "losscost/error.hpp"
#include "losscost/synth.hpp"
#include "losscost/table.hpp"

using namespace losscost;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

Schema small_schema() {
  return Schema::from_config(Config::parse(
      "[feature.limit]\nkind = numeric\n"
      "[feature.risk_type]\nkind = categorical\ncategories = Apartment, Office\n"));
}

ErrorCode read_error(const std::string& csv) {
  std::istringstream in(csv);
  try {
    read_table(in, small_schema());
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

PortfolioTable tiny(std::vector<double> limit, std::vector<std::string> risk) {
  PortfolioTable t;
  const auto n = static_cast<Eigen::Index>(limit.size());
  t.features = {{"limit", FeatureKind::Numeric, {}, 1.0, ""}, {"risk_type", FeatureKind::Categorical, {"A", "B"}, 1.0, ""}};
  t.columns = {Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    t.columns[0](i) = limit[static_cast<std::size_t>(i)];
    t.columns[1](i) = risk[static_cast<std::size_t>(i)] == "A" ? 0 : 1;
    t.id.push_back("r" + std::to_string(i));
  }
  t.response = Eigen::VectorXd::Ones(n);
  t.exposure = Eigen::VectorXd::Ones(n);
  t.coverage.assign(static_cast<std::size_t>(n), Coverage::BG);
  t.refresh_fill_rates();
  return t;
}

}  // namespace

TEST_CASE("config parsing keeps order and dotted keys") {
  const auto c = Config::parse("[b]\nx = 1\n[a]\ngrid.alpha = 0.1, 0.2 ,\ny = yes\n");
  REQUIRE(c.sections().size() == 2);
  CHECK(c.sections()[0].name == "b");
  CHECK(c.get_list("a", "grid.alpha") == std::vector<std::string>{"0.1", "0.2"});
  CHECK(c.get_bool("a", "y", false));
  CHECK(c.get_int("b", "x", 0) == 1);
  CHECK_THROWS_AS(c.get_int("a", "grid.alpha", 0), Error);
  const auto again = Config::parse(c.to_string());
  CHECK(again.to_string() == c.to_string());
}

TEST_CASE("load a three-row file") {
  std::istringstream in(
      "policy_id,coverage,limit,risk_type,exposure,loss_cost\n"
      "a,BG,1.5,Apartment,1,0\n"
      "b,BP,NA,Office,0.5,120\n"
      "c,LIAB,,Apartment,1,0\n");
  const auto t = read_table(in, small_schema());
  CHECK(t.rows() == 3);
  CHECK(encode(t, MissingPolicy::MeanImpute).matrix.cols() == 3);
  CHECK(t.features[0].fill_rate == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(std::isnan(t.columns[0](1)));
  CHECK(t.coverage[2] == Coverage::LIAB);
}

TEST_CASE("load errors") {
  const std::string head = "policy_id,coverage,limit,risk_type,exposure,loss_cost\n";
  CHECK(read_error(head + "a,BG,1,Apartment,1,-5\n") == ErrorCode::NegativeResponse);
  CHECK(read_error(head + "a,BG,1,Apartment,0,5\n") == ErrorCode::NonPositiveExposure);
  CHECK(read_error(head + "a,BG,abc,Apartment,1,5\n") == ErrorCode::TypeMismatch);
  CHECK(read_error(head + "a,BG,1,Castle,1,5\n") == ErrorCode::TypeMismatch);
  CHECK(read_error("policy_id,coverage,risk_type,exposure,loss_cost\na,BG,Office,1,0\n") == ErrorCode::MissingColumn);
}

TEST_CASE("write then read reproduces the table") {
  GeneratorConfig g;
  g.rows = 300;
  g.insurtech_noise = 2;
  const auto p = synthesize_portfolio(g, 5);
  std::stringstream s;
  write_table(s, p.table, p.schema);
  const auto back = read_table(s, p.schema);
  REQUIRE(back.rows() == p.table.rows());
  for (std::size_t f = 0; f < back.columns.size(); ++f) {
    for (Eigen::Index i = 0; i < back.rows(); ++i) {
      const double a = back.columns[f](i), b = p.table.columns[f](i);
      CHECK((a == b || (std::isnan(a) && std::isnan(b))));
    }
  }
  CHECK(back.response == p.table.response);
  CHECK(back.id == p.table.id);
}

TEST_CASE("encoding examples") {
  const auto t = tiny({1, kNaN, 3}, {"A", "B", "A"});
  const auto mean = encode(t, MissingPolicy::MeanImpute);
  REQUIRE(mean.matrix.cols() == 3);
  CHECK(mean.matrix.col(0) == Eigen::Vector3d(1, 2, 3));
  CHECK(mean.matrix.col(1) == Eigen::Vector3d(1, 0, 1));
  CHECK(mean.matrix.col(2) == Eigen::Vector3d(0, 1, 0));

  const auto ind = encode(t, MissingPolicy::IndicatorPlusZero);
  REQUIRE(ind.matrix.cols() == 4);
  const auto names = ind.encoding.column_names();
  Eigen::Index value = -1, indicator = -1;
  for (Eigen::Index j = 0; j < 4; ++j) {
    if (ind.encoding.columns[static_cast<std::size_t>(j)].feature != 0) continue;
    (ind.encoding.columns[static_cast<std::size_t>(j)].role == ColumnRole::MissingIndicator ? indicator : value) = j;
  }
  REQUIRE(value >= 0);
  REQUIRE(indicator >= 0);
  CHECK(ind.matrix.col(value) == Eigen::Vector3d(1, 0, 3));
  CHECK(ind.matrix.col(indicator) == Eigen::Vector3d(0, 1, 0));
}

TEST_CASE("encoding round trip and one-hot rows") {
  GeneratorConfig g;
  g.rows = 500;
  const auto p = synthesize_portfolio(g, 9);
  for (auto policy : {MissingPolicy::MeanImpute, MissingPolicy::IndicatorPlusZero}) {
    const auto e = encode(p.table, policy);
    for (std::size_t f = 0; f < p.table.features.size(); ++f) {
      for (Eigen::Index i = 0; i < p.table.rows(); ++i) {
        const double orig = p.table.columns[f](i);
        const auto cell = decode_cell(e.encoding, e.matrix, i, f);
        if (std::isnan(orig)) {
          if (policy == MissingPolicy::IndicatorPlusZero) CHECK(!cell.has_value());
        } else {
          REQUIRE(cell.has_value());
          CHECK(*cell == orig);
        }
      }
      if (p.table.features[f].kind == FeatureKind::Categorical) {
        const auto cols = e.encoding.columns_of(f);
        for (Eigen::Index i = 0; i < p.table.rows(); ++i) {
          double s = 0;
          for (auto c : cols) s += e.matrix(i, static_cast<Eigen::Index>(c));
          CHECK(s == 1.0);
        }
      }
    }
    std::stringstream s;
    write_encoding(s, e.encoding);
    const auto back = read_encoding(s);
    CHECK(apply_encoding(back, p.table) == e.matrix);
  }
}

TEST_CASE("apply_encoding rejects tables without the expected features") {
  const auto t = tiny({1, 2}, {"A", "B"});
  const auto e = encode(t, MissingPolicy::MeanImpute);
  CHECK_THROWS_AS(apply_encoding(e.encoding, t.select({"limit"})), Error);
}

TEST_CASE("split sizes and partition") {
  const auto t10 = tiny(std::vector<double>(10, 1.0), std::vector<std::string>(10, "A"));
  SplitPlan plan;
  plan.k = 5;
  const auto p10 = make_splits(t10, plan);
  for (std::size_t f = 0; f < 5; ++f) CHECK(p10.rows_in(f).size() == 2);

  const auto t11 = tiny(std::vector<double>(11, 1.0), std::vector<std::string>(11, "A"));
  const auto p11 = make_splits(t11, plan);
  std::multiset<std::size_t> sizes;
  for (std::size_t f = 0; f < 5; ++f) sizes.insert(p11.rows_in(f).size());
  CHECK(sizes == std::multiset<std::size_t>{2, 2, 2, 2, 3});

  plan.k = 12;
  CHECK_THROWS_AS(make_splits(t11, plan), Error);
}

TEST_CASE("splits are stratified on zero losses and reproducible") {
  GeneratorConfig g;
  g.rows = 10000;
  g.coverages[0].zero_share = 0.97;
  const auto p = synthesize_portfolio(g, 21);
  SplitPlan plan;
  plan.k = 10;
  plan.seed = 4;
  const auto a = make_splits(p.table, plan);
  const auto b = make_splits(p.table, plan);
  CHECK(a.fold_assignment == b.fold_assignment);
  std::vector<int> seen(static_cast<std::size_t>(p.table.rows()), 0);
  for (std::size_t f = 0; f < 10; ++f) {
    const auto rows = a.rows_in(f);
    std::size_t zeros = 0;
    for (auto r : rows) {
      ++seen[static_cast<std::size_t>(r)];
      zeros += p.table.response(r) == 0.0;
    }
    const double share = static_cast<double>(zeros) / static_cast<double>(rows.size());
    CHECK(share >= 0.96);
    CHECK(share <= 0.98);
  }
  for (int s : seen) CHECK(s == 1);

  plan.seed = 5;
  CHECK(make_splits(p.table, plan).fold_assignment != a.fold_assignment);
}

TEST_CASE("train/test split honours the fraction") {
  GeneratorConfig g;
  g.rows = 2000;
  const auto p = synthesize_portfolio(g, 1);
  SplitPlan plan;
  plan.kind = SplitKind::TrainTest;
  plan.test_fraction = 0.2;
  const auto s = make_splits(p.table, plan);
  CHECK(s.rows_in(1).size() == 400);
  CHECK(s.rows_in(0).size() == 1600);
}
