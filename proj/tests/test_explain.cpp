#include <doctest.h>

#include <random>

#include "losscost/error.hpp"
#include "losscost/explain.hpp"
#include "losscost/pipeline.hpp"
#include "losscost/synth.hpp"
#include "oracles.hpp"
#include "random_tree.hpp"

using namespace losscost;

namespace {

GbdtModel model_of(std::vector<Tree> trees, double f0, double rate, Eigen::Index columns) {
  GbdtModel m;
  m.f0 = f0;
  m.trees = std::move(trees);
  m.learning_rates.assign(m.trees.size(), rate);
  m.n_columns = columns;
  return m;
}

Tree stump(int feature, double threshold, double left, double right, double wl, double wr) {
  Tree t;
  t.nodes.resize(3);
  t.nodes[0].feature = feature;
  t.nodes[0].threshold = threshold;
  t.nodes[0].left = 1;
  t.nodes[0].right = 2;
  t.nodes[0].cover = wl + wr;
  t.nodes[0].gain = 2.0;
  t.nodes[1].value = left;
  t.nodes[1].cover = wl;
  t.nodes[2].value = right;
  t.nodes[2].cover = wr;
  return t;
}

SyntheticPortfolio data(std::size_t rows, std::uint64_t seed) {
  GeneratorConfig g;
  g.rows = rows;
  g.coverages[0].zero_share = 0.85;
  return synthesize_portfolio(g, seed);
}

}  // namespace

TEST_CASE("shapley values of a single stump") {
  const auto m = model_of({stump(1, 0.5, -1.0, 3.0, 3.0, 1.0)}, 0.2, 1.0, 3);
  Eigen::MatrixXd x(2, 3);
  x << 9, 0.1, 9, 9, 0.9, 9;
  const auto s = tree_shap(m, x);
  CHECK(s.base_value == doctest::Approx(0.2 + 0.0).epsilon(1e-15));
  const Eigen::VectorXd link = m.predict_link(x);
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(s.values(i, 0) == 0.0);
    CHECK(s.values(i, 2) == 0.0);
    CHECK(s.values(i, 1) == doctest::Approx(link(i) - s.base_value).epsilon(1e-14));
  }
}

TEST_CASE("intercept-only model has no attributions") {
  const auto m = model_of({}, 1.3, 0.1, 2);
  const auto s = tree_shap(m, Eigen::MatrixXd::Random(4, 2));
  CHECK(s.base_value == 1.3);
  CHECK(s.values.isZero(0.0));
}

TEST_CASE("tree shap equals the coalition oracle on small trees") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    const auto tree = testing_support::random_tree(rng, 2, 7);
    for (int r = 0; r < 5; ++r) {
      Eigen::RowVectorXd x(2);
      x << u(rng), (r == 4 ? std::nan("") : u(rng));
      Eigen::RowVectorXd phi = Eigen::RowVectorXd::Zero(2);
      tree_shap_row(tree, x, 1.0, phi);
      const Eigen::RowVectorXd want = oracle::shapley(tree, x, 2);
      CHECK((phi - want).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("duplicated columns used symmetrically get equal attributions") {
  Tree t;
  t.nodes.resize(7);
  auto split = [&](int id, int f, int l, int r) {
    t.nodes[static_cast<std::size_t>(id)].feature = f;
    t.nodes[static_cast<std::size_t>(id)].threshold = 0.5;
    t.nodes[static_cast<std::size_t>(id)].left = l;
    t.nodes[static_cast<std::size_t>(id)].right = r;
  };
  split(0, 0, 1, 2);
  split(1, 1, 3, 4);
  split(2, 1, 5, 6);
  const double v[] = {0, 0, 0, 0, 1, 1, 5};
  for (int k = 3; k < 7; ++k) {
    t.nodes[static_cast<std::size_t>(k)].value = v[k];
    t.nodes[static_cast<std::size_t>(k)].cover = 1;
  }
  t.nodes[1].cover = t.nodes[2].cover = 2;
  t.nodes[0].cover = 4;
  Eigen::RowVectorXd x(2);
  x << 1, 1;
  Eigen::RowVectorXd phi = Eigen::RowVectorXd::Zero(2);
  tree_shap_row(t, x, 1.0, phi);
  CHECK(phi(0) == doctest::Approx(phi(1)).epsilon(1e-14));
}

TEST_CASE("local accuracy on a fitted ensemble") {
  const auto p = data(1000, 3);
  ModelSpec spec;
  spec.gbdt.n_estimators = 50;
  spec.gbdt.num_leaves = 16;
  spec.gbdt.max_depth = 6;
  spec.gbdt.feature_fraction = 0.8;
  spec.gbdt.subsample = 0.8;
  const auto model = fit_model(p.table, spec, 1);
  const Eigen::MatrixXd x = model.design(p.table);
  const auto s = tree_shap(*model.gbdt, x);
  const Eigen::VectorXd link = model.gbdt->predict_link(x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    CHECK(std::abs(s.base_value + s.values.row(i).sum() - link(i)) <= 1e-9);
  }
  const auto agg = aggregate_shap(s, model.encoding);
  CHECK(agg.values.cols() == static_cast<Eigen::Index>(model.encoding.features.size()));
  CHECK((agg.values.rowwise().sum() - s.values.rowwise().sum()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("mdi") {
  Encoding e;
  e.features = {{"a", FeatureKind::Numeric, {}, 1.0, ""}, {"b", FeatureKind::Numeric, {}, 1.0, ""}};
  e.columns = {{"a", 0, ColumnRole::Value, -1}, {"b", 1, ColumnRole::Value, -1}};
  const auto m = model_of({stump(1, 0.5, -1, 1, 1, 1)}, 0, 0.1, 2);
  const auto imp = mdi(m, e);
  CHECK(imp.scores[0].score == 0.0);
  CHECK(imp.scores[1].score == 1.0);

  const auto p = data(3000, 4);
  ModelSpec spec;
  spec.gbdt.n_estimators = 30;
  const auto model = fit_model(p.table, spec, 2);
  const auto full = mdi(*model.gbdt, model.encoding);
  double total = 0;
  for (const auto& s : full.scores) {
    CHECK(s.score >= 0.0);
    total += s.score;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mda") {
  const auto p = data(2000, 5);
  ModelSpec spec;
  spec.features = {"log_limit", "building_age", "risk_type"};
  spec.gbdt.n_estimators = 20;
  const auto model = fit_model(p.table, spec, 1);
  const auto a = mda(model, p.table, 1, 9);
  const auto b = mda(model, p.table, 1, 9);
  REQUIRE(a.scores.size() == b.scores.size());
  for (std::size_t k = 0; k < a.scores.size(); ++k) CHECK(a.scores[k].score == b.scores[k].score);

  // A model that never splits on building_age is blind to its permutation.
  spec.features = {"log_limit", "building_age"};
  spec.gbdt.n_estimators = 1;
  spec.gbdt.num_leaves = 2;
  spec.gbdt.max_depth = 1;
  const auto one = fit_model(p.table, spec, 1);
  const auto& n = one.gbdt->trees[0].nodes[0];
  const auto used = static_cast<std::size_t>(n.feature);
  const auto scores = mda(one, p.table, 2, 3);
  for (std::size_t k = 0; k < scores.scores.size(); ++k) {
    if (k != used) CHECK(scores.scores[k].score == 0.0);
  }
}

TEST_CASE("ale of an additive piecewise-linear model") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  Eigen::MatrixXd x(500, 2);
  Eigen::VectorXd w(500);
  for (Eigen::Index i = 0; i < 500; ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    w(i) = 0.5 + (u(rng) + 2) / 4;
  }
  auto h = [](double v) { return v < 0.3 ? 3 * v : 0.9 - 2 * (v - 0.3); };
  const LinkFunction f = [&](const Eigen::MatrixXd& m) {
    Eigen::VectorXd out(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i) = h(m(i, 0)) + std::sin(m(i, 1));
    return out;
  };
  std::vector<Eigen::Index> rows(500);
  for (Eigen::Index i = 0; i < 500; ++i) rows[static_cast<std::size_t>(i)] = i;
  const auto c = ale_numeric(f, x, w, 0, 20, rows);
  for (std::size_t k = 0; k < c.edges.size(); ++k) {
    CHECK(std::abs((c.effect[k] - c.effect[0]) - (h(c.edges[k]) - h(c.edges[0]))) <= 1e-9);
  }
  double wm = 0;
  for (Eigen::Index i = 0; i < 500; ++i) wm += w(i) * ale_value(c, x(i, 0));
  CHECK(std::abs(wm / w.sum()) <= 1e-9);

  const LinkFunction blind = [](const Eigen::MatrixXd& m) { return (m.col(1) * 2).eval(); };
  const auto flat = ale_numeric(blind, x, w, 0, 10, rows);
  for (double e : flat.effect) CHECK(e == 0.0);
}

TEST_CASE("ale on a fitted model and categorical ordering") {
  const auto p = data(3000, 7);
  ModelSpec spec;
  spec.gbdt.n_estimators = 30;
  const auto model = fit_model(p.table, spec, 1);
  const auto c = ale(model, p.table, "log_limit", 10);
  CHECK_FALSE(c.categorical);
  CHECK(c.edges.size() == c.effect.size());
  const auto cat = ale(model, p.table, "risk_type");
  CHECK(cat.categorical);
  for (std::size_t k = 1; k < cat.bin_rows.size(); ++k) CHECK(cat.bin_rows[k - 1] >= cat.bin_rows[k]);
  CHECK_THROWS_AS(ale(model, p.table.select(p.table.feature_names()), "no_such_feature"), Error);
}

TEST_CASE("ale rejects a constant feature") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
  const LinkFunction f = [](const Eigen::MatrixXd& m) { return m.col(0).eval(); };
  std::vector<Eigen::Index> rows{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(ale_numeric(f, x, Eigen::VectorXd::Ones(10), 0, 5, rows), Error);
}
