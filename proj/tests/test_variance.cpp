#include <doctest.h>

#include "losscost/error.hpp"
#include "losscost/synth.hpp"
#include "losscost/variance.hpp"

using namespace losscost;

namespace {

GeneratorConfig base(std::size_t rows) {
  GeneratorConfig g;
  g.rows = rows;
  g.coverages[0].zero_share = 0.8;
  g.partial_exposure_share = 0.0;
  return g;
}

ModelSpec glm_spec() {
  ModelSpec s;
  s.kind = RecipeKind::GlmElasticNet;
  s.glm.alpha = 1e-4;
  s.glm.l1_ratio = 0.5;
  s.glm.power = 1.34;
  return s;
}

}  // namespace

TEST_CASE("population variance divides by n") {
  CHECK(population_variance(Eigen::Vector4d(1, 2, 3, 4)) == doctest::Approx(1.25).epsilon(1e-15));
}

TEST_CASE("oracle terms") {
  const auto p = synthesize_portfolio(base(20000), 3);
  const auto r = oracle_decompose(p.table, p.truth);
  CHECK(r.three_term);
  CHECK(r.term_noise > 0);
  CHECK(r.term_gain > 0);
  CHECK(std::abs(r.var_y - r.sum()) <= 3 * r.standard_error);

  auto g = base(20000);
  g.insurtech_signal = 0.0;
  const auto flat = synthesize_portfolio(g, 3);
  CHECK(oracle_decompose(flat.table, flat.truth).term_gain == 0.0);

  GroundTruth shorter = p.truth;
  shorter.mu.conservativeResize(10);
  CHECK_THROWS_AS(oracle_decompose(p.table, shorter), Error);
}

TEST_CASE("doubling dispersion doubles the noise term") {
  auto g = base(50000);
  g.coverages[0].dispersion = 20.0;
  const auto p1 = synthesize_portfolio(g, 5);
  const auto a = oracle_decompose(p1.table, p1.truth);
  g.coverages[0].dispersion = 40.0;
  const auto p2 = synthesize_portfolio(g, 5);
  const auto b = oracle_decompose(p2.table, p2.truth);
  // noise_variance is phi mu^p / exposure, so the retained truth scales exactly.
  CHECK(b.term_noise == doctest::Approx(2 * a.term_noise).epsilon(1e-9));
  CHECK(b.term_base == doctest::Approx(a.term_base).epsilon(1e-12));
}

TEST_CASE("decompose") {
  const auto p = synthesize_portfolio(base(5000), 8);
  SplitPlan plan;
  plan.k = 3;
  const auto ih = p.table.block_features(kInHouseBlock);
  const auto it = p.table.block_features(kInsurTechBlock);

  SUBCASE("empty added block gives two terms") {
    const auto r = decompose(p.table, ih, {}, glm_spec(), plan);
    CHECK_FALSE(r.three_term);
    CHECK(r.term_gain == 0.0);
    CHECK(r.sum() == doctest::Approx(r.var_y).epsilon(1e-12));
  }
  SUBCASE("three terms add up by construction") {
    const auto r = decompose(p.table, ih, it, glm_spec(), plan);
    CHECK(r.sum() == doctest::Approx(r.var_y).epsilon(1e-12));
    CHECK(r.term_base + r.term_gain >= r.term_base - 1e-9 * r.var_y);
    CHECK(r.folds == 3);
  }
  SUBCASE("overlapping blocks") {
    CHECK_THROWS_AS(decompose(p.table, ih, {ih[0]}, glm_spec(), plan), Error);
  }
}
