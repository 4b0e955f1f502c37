#include <doctest.h>

#include <set>
#include <sstream>

#include "losscost/error.hpp"
#include "losscost/synth.hpp"

using namespace losscost;

namespace {

std::string csv(const SyntheticPortfolio& p) {
  std::ostringstream s;
  write_table(s, p.table, p.schema);
  return s.str();
}

double zero_share(const Eigen::VectorXd& y) { return (y.array() == 0.0).cast<double>().mean(); }

}  // namespace

TEST_CASE("realized zero share tracks the configured share") {
  auto g = GeneratorConfig::preset("bg");
  g.rows = 100000;
  const auto p = synthesize_portfolio(g, 2026);
  const double z = zero_share(p.table.response);
  CHECK(z >= 0.960);
  CHECK(z <= 0.970);
}

TEST_CASE("no claims when the zero share is one") {
  GeneratorConfig g;
  g.rows = 1000;
  g.coverages[0].zero_share = 1.0;
  const auto p = synthesize_portfolio(g, 1);
  CHECK(p.table.response.isZero(0.0));
}

TEST_CASE("determinism") {
  GeneratorConfig g;
  g.rows = 2000;
  CHECK(csv(synthesize_portfolio(g, 5)) == csv(synthesize_portfolio(g, 5)));
  CHECK(csv(synthesize_portfolio(g, 5)) != csv(synthesize_portfolio(g, 6)));
}

TEST_CASE("response mean matches the retained mean") {
  // Each seed lands within 2 standard errors about 95% of the time, so look at a batch of seeds.
  GeneratorConfig g;
  g.rows = 100000;
  g.coverages[0].zero_share = 0.9;
  const int seeds = 20;
  int outside = 0;
  double z_sum = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const auto p = synthesize_portfolio(g, static_cast<std::uint64_t>(s));
    const double n = static_cast<double>(g.rows);
    const Eigen::ArrayXd dev = p.table.response.array() - p.truth.mu.array();
    const double se = std::sqrt((dev - dev.mean()).square().sum() / (n - 1) / n);
    const double z = dev.mean() / se;
    outside += std::abs(z) > 2.0;
    z_sum += z;
  }
  CHECK(outside <= 4);
  CHECK(std::abs(z_sum / seeds) <= 3.0 / std::sqrt(double(seeds)));
}

TEST_CASE("blocks, mixed coverages and config round trip") {
  auto g = GeneratorConfig::preset("mixed");
  g.rows = 3000;
  g.inhouse_noise = 2;
  g.insurtech_noise = 3;
  const auto p = synthesize_portfolio(g, 4);
  CHECK(p.table.block_features(kInHouseBlock).size() == 8);
  CHECK(p.table.block_features(kInsurTechBlock).size() == 11);
  std::set<Coverage> seen(p.table.coverage.begin(), p.table.coverage.end());
  CHECK(seen.size() == 3);
  Config c;
  g.to_config(c);
  const auto back = GeneratorConfig::from_config(c);
  Config again;
  back.to_config(again);
  CHECK(again.to_string() == c.to_string());
  CHECK(csv(synthesize_portfolio(back, 4)) == csv(p));

  std::stringstream s;
  write_ground_truth(s, p);
  const auto truth = read_ground_truth(s);
  CHECK(truth.mu == p.truth.mu);
  CHECK(truth.gain_variance == p.truth.gain_variance);
}

TEST_CASE("invalid generator settings") {
  GeneratorConfig g;
  g.coverages[0].zero_share = 1.5;
  CHECK_THROWS_AS(g.validate(), Error);
  g = GeneratorConfig{};
  g.rows = 0;
  CHECK_THROWS_AS(g.validate(), Error);
  CHECK_THROWS_AS(GeneratorConfig::preset("nope"), Error);
}
