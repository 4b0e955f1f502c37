#include <doctest.h>

#include <cfloat>
#include <random>
#include <sstream>

#include "losscost/gbdt.hpp"
#include "losscost/synth.hpp"
#include "losscost/table.hpp"
#include "losscost/tweedie.hpp"
#include "tree_compare.hpp"
#include "tweedie_sampler.hpp"

using namespace losscost;

namespace {

struct Data {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

Data portfolio(std::size_t rows, std::uint64_t seed, MissingPolicy policy = MissingPolicy::IndicatorPlusZero) {
  GeneratorConfig g;
  g.rows = rows;
  g.coverages[0].zero_share = 0.9;
  const auto p = synthesize_portfolio(g, seed);
  return {encode(p.table, policy).matrix, p.table.response, p.table.exposure};
}

GbdtConfig small_config() {
  GbdtConfig c;
  c.n_estimators = 20;
  c.learning_rate = 0.1;
  c.num_leaves = 8;
  c.max_depth = 4;
  c.min_child_samples = 20;
  c.power = 1.5;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  GbdtConfig c;
  c.n_estimators = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = GbdtConfig{};
  c.num_leaves = 300;
  c.max_depth = 8;
  CHECK_THROWS_AS(c.validate(), Error);
  c = GbdtConfig{};
  c.goss.enabled = true;
  c.goss.top_rate = 0.7;
  c.goss.other_rate = 0.4;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("binning") {
  SUBCASE("few distinct values are binned exactly") {
    Eigen::MatrixXd x(6, 1);
    x << 1, 2, 3, 3, 2, 1;
    const auto b = build_bins(x, 100, 255);
    CHECK(b[0].exact());
    CHECK(b[0].value_bins() == 3);
    CHECK(b[0].bin_of(1) != b[0].bin_of(2));
    CHECK(b[0].bin_of(2) != b[0].bin_of(3));
  }
  SUBCASE("quantile boundaries") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u;
    Eigen::MatrixXd x(100000, 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = u(rng);
    const auto b = build_bins(x, 200000, 4);
    REQUIRE(b[0].boundaries.size() == 3);
    CHECK(std::abs(b[0].boundaries[0] - 0.25) < 0.05);
    CHECK(std::abs(b[0].boundaries[1] - 0.50) < 0.05);
    CHECK(std::abs(b[0].boundaries[2] - 0.75) < 0.05);
  }
  SUBCASE("constant column") {
    const auto b = build_bins(Eigen::MatrixXd::Constant(10, 1, 4.0), 100, 255);
    CHECK_FALSE(b[0].splittable());
    CHECK(b[0].bins() == 1);
  }
  SUBCASE("missing values get their own bin") {
    Eigen::MatrixXd x(4, 1);
    x << 1, std::nan(""), 2, 3;
    const auto b = build_bins(x, 100, 255);
    CHECK(b[0].has_missing);
    CHECK(b[0].bin_of(std::nan("")) == b[0].missing_bin());
  }
}

TEST_CASE("exclusive feature bundling") {
  SUBCASE("one-hot pair bundles, dense pair does not") {
    Eigen::MatrixXd x(6, 4);
    x << 1, 0, 0.3, 1.2, 0, 1, 0.5, 2.2, 1, 0, 0.9, 3.1, 0, 1, 1.1, 0.4, 1, 0, 1.7, 0.8, 0, 1, 2.3, 1.9;
    const auto bins = build_bins(x, 100, 255);
    const auto bundles = bundle_features(x, bins, 0);
    bool pair = false;
    for (const auto& b : bundles) {
      if (b.columns.size() == 2 && b.columns[0] + b.columns[1] == 1) pair = true;
      if (b.columns.size() > 1) {
        for (auto c : b.columns) CHECK(c < 2);
      }
    }
    CHECK(pair);
  }
  SUBCASE("exclusive indicators round trip") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 20; ++t) {
      const int k = 2 + t % 6;
      Eigen::MatrixXd x = Eigen::MatrixXd::Zero(200, k);
      std::uniform_int_distribution<int> pick(-1, k - 1);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int c = pick(rng);
        if (c >= 0) x(i, c) = 1.0;
      }
      const auto bins = build_bins(x, 1000, 255);
      const auto bundles = bundle_features(x, bins, 0);
      const BinnedMatrix m(x, bins, bundles);
      std::size_t splittable = 0;
      for (const auto& b : bins) splittable += b.splittable();
      if (splittable == static_cast<std::size_t>(k)) {
        CHECK(m.groups() == 1);
        CHECK(m.group_bins(0) == k + 1);
      }
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto back = m.unbundle(static_cast<std::size_t>(j));
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          CHECK(back[static_cast<std::size_t>(i)] == bins[static_cast<std::size_t>(j)].bin_of(x(i, j)));
        }
      }
    }
  }
}

TEST_CASE("goss sample") {
  SUBCASE("ten rows") {
    Eigen::VectorXd g(10);
    g << 0.1, -5, 0.2, 0.3, 4, -0.1, 0.05, 0.2, 0.1, 0.15;
    const auto s = goss_sample(g, 0.2, 0.1, 1);
    REQUIRE(s.rows.size() == 3);
    int eights = 0, ones = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      if (s.multipliers(static_cast<Eigen::Index>(k)) == 8.0) ++eights;
      if (s.multipliers(static_cast<Eigen::Index>(k)) == 1.0) {
        ++ones;
        CHECK((s.rows[k] == 1 || s.rows[k] == 4));
      }
    }
    CHECK(eights == 1);
    CHECK(ones == 2);
    CHECK(std::is_sorted(s.rows.begin(), s.rows.end()));
  }
  SUBCASE("full sample") {
    const Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(20, -1, 2);
    const auto s = goss_sample(g, 0.3, 0.7, 5);
    CHECK(s.rows.size() == 20);
  }
  SUBCASE("reweighted sum is unbiased") {
    std::mt19937_64 rng(6);
    std::lognormal_distribution<double> ln;
    Eigen::VectorXd g(2000);
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = ln(rng) - 0.5;
    double mean = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const auto s = goss_sample(g, 0.2, 0.1, seed);
      for (std::size_t k = 0; k < s.rows.size(); ++k) mean += s.multipliers(static_cast<Eigen::Index>(k)) * g(s.rows[k]);
    }
    mean /= 1000;
    CHECK(std::abs(mean - g.sum()) <= 0.01 * std::abs(g.sum()));
  }
}

TEST_CASE("intercept and degenerate data") {
  auto d = portfolio(500, 2);
  auto c = small_config();
  const auto fit = fit_gbdt(d.x, d.y, d.w, c);
  CHECK(fit.model.f0 == doctest::Approx(std::log(d.w.dot(d.y) / d.w.sum())).epsilon(1e-14));
  const auto p0 = predict_gbdt(fit.model, d.x, 0);
  CHECK(p0(0) == doctest::Approx(d.w.dot(d.y) / d.w.sum()).epsilon(1e-13));
  CHECK((predict_gbdt(fit.model, d.x).array() > 0).all());

  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(d.y.size());
  const auto dead = fit_gbdt(d.x, zeros, d.w, c);
  CHECK(dead.model.trees.empty());
  REQUIRE_FALSE(dead.trace.warnings.empty());
  CHECK(dead.trace.warnings[0].rfind("DegenerateData", 0) == 0);
}

TEST_CASE("stage additivity") {
  const auto d = portfolio(2000, 3);
  auto c = small_config();
  c.subsample = 0.7;
  c.feature_fraction = 0.6;
  GbdtFitOptions o;
  o.record_stages = true;
  const auto fit = fit_gbdt(d.x, d.y, d.w, c, o);
  REQUIRE(fit.trace.stage_link.size() == c.n_estimators + 1);
  for (std::size_t k = 0; k <= c.n_estimators; ++k) CHECK(fit.model.predict_link(d.x, k) == fit.trace.stage_link[k]);
}

TEST_CASE("training loss is non-increasing at a small learning rate") {
  const auto d = portfolio(3000, 4);
  auto c = small_config();
  c.learning_rate = 0.05;
  c.n_estimators = 40;
  const auto fit = fit_gbdt(d.x, d.y, d.w, c);
  for (std::size_t k = 1; k < fit.trace.train_loss.size(); ++k) {
    CHECK(fit.trace.train_loss[k] <= fit.trace.train_loss[k - 1] + 1e-10);
  }
}

TEST_CASE("bundling does not change predictions") {
  const auto d = portfolio(3000, 5);
  auto c = small_config();
  c.efb = false;
  const auto off = fit_gbdt(d.x, d.y, d.w, c);
  c.efb = true;
  const auto on = fit_gbdt(d.x, d.y, d.w, c);
  CHECK(predict_gbdt(on.model, d.x) == predict_gbdt(off.model, d.x));
}

TEST_CASE("first stage matches a cart tree on the negative gradients") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u;
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index n = 150;
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) x(i, j) = std::round(u(rng) * 40) / 4;
      y(i) = testing_support::tweedie_draw(rng, std::exp(x(i, 0) / 5), 1.0, 1.5);
      w(i) = 0.5 + u(rng);
    }
    if (y.sum() == 0) continue;
    GbdtConfig c;
    c.n_estimators = 1;
    c.learning_rate = 1;
    c.num_leaves = 64;
    c.max_depth = 6;
    c.min_child_samples = 5;
    c.leaf_mode = LeafMode::Average;
    c.power = 1.5;
    const auto fit = fit_gbdt(x, y, w, c);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = -tweedie::gradient(1.5, y(i), fit.model.f0);
    TreeConfig tc;
    tc.max_depth = 6;
    tc.min_child_samples = 5;
    const auto ref = grow(x, target, w, tc);
    CHECK_MESSAGE(testing_support::same_tree(fit.model.trees[0], ref, 1e-9), "instance ", t);
  }
}

TEST_CASE("squared loss single deep tree interpolates") {
  Eigen::MatrixXd x(8, 1);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i * 1.5;
    y(i) = (i * 7) % 5 + 0.25;
  }
  GbdtConfig c;
  c.objective = Objective::Squared;
  c.n_estimators = 1;
  c.learning_rate = 1;
  c.num_leaves = 8;
  c.max_depth = 8;
  c.min_child_samples = 1;
  const auto fit = fit_gbdt(x, y, Eigen::VectorXd::Ones(8), c);
  CHECK((predict_gbdt(fit.model, x) - y).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("goss and early stopping") {
  const auto d = portfolio(3000, 6);
  auto c = small_config();
  c.goss.enabled = true;
  const auto fit = fit_gbdt(d.x, d.y, d.w, c);
  CHECK(fit.model.trees.size() == c.n_estimators);

  const auto v = portfolio(1000, 60);
  c.goss.enabled = false;
  c.n_estimators = 300;
  c.learning_rate = 0.5;
  c.early_stopping_rounds = 5;
  GbdtFitOptions o;
  o.validation = ValidationSet{v.x, v.y, v.w};
  const auto es = fit_gbdt(d.x, d.y, d.w, c, o);
  CHECK(es.model.trees.size() <= c.n_estimators);
  CHECK(es.trace.valid_loss.size() >= es.model.trees.size());
}

TEST_CASE("model file round trip is bit exact") {
  const auto d = portfolio(1500, 7);
  auto c = small_config();
  c.efb = true;
  c.reg_alpha = 0.01;
  c.reg_lambda = 0.5;
  const auto fit = fit_gbdt(d.x, d.y, d.w, c);
  std::stringstream s;
  save_gbdt(s, fit.model);
  const auto back = load_gbdt(s);
  CHECK(predict_gbdt(back, d.x) == predict_gbdt(fit.model, d.x));
  std::stringstream again;
  save_gbdt(again, back);
  std::stringstream first;
  save_gbdt(first, fit.model);
  CHECK(again.str() == first.str());
  CHECK_THROWS_AS(predict_gbdt(fit.model, Eigen::MatrixXd::Zero(3, d.x.cols() + 1)), Error);
}
