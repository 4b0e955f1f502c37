#include <doctest.h>

#include <random>

#include "losscost/tweedie.hpp"

using namespace losscost;

namespace {

Eigen::VectorXd v(std::initializer_list<double> xs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("nll hand values") {
  const TweedieSpec s(1.5);
  CHECK(nll(s, v({0.0}), v({2.0}), v({1.0})) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(nll(s, v({0.0}), v({0.0}), v({1.0})) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(nll(s, v({0.3, 1.0}), v({4.0, 7.0}), v({0.0, 0.0})) == 0.0);
}

TEST_CASE("gradient hand values") {
  const TweedieSpec s(1.5);
  CHECK(nll_grad(s, v({0.0}), v({2.0}), v({1.0}))(0) == doctest::Approx(-1.0).epsilon(1e-15));
  const double eta = 0.7;
  CHECK(std::abs(nll_grad(s, v({eta}), v({std::exp(eta)}), v({1.0}))(0)) < 1e-14);
  CHECK(nll_grad(s, v({eta}), v({3.0}), v({0.0}))(0) == 0.0);
}

TEST_CASE("gradient and hessian agree with central differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pw(1.05, 1.95), et(-3, 3), yy(0, 20);
  for (int k = 0; k < 200; ++k) {
    const double p = pw(rng), eta = et(rng), y = k % 3 == 0 ? 0.0 : yy(rng);
    const double h = 1e-5 * std::max(1.0, std::abs(eta));
    const double fd_g = (tweedie::kernel(p, y, eta + h) - tweedie::kernel(p, y, eta - h)) / (2 * h);
    const double fd_h = (tweedie::gradient(p, y, eta + h) - tweedie::gradient(p, y, eta - h)) / (2 * h);
    CHECK(std::abs(fd_g - tweedie::gradient(p, y, eta)) <= 1e-6 * std::max(1.0, std::abs(fd_g)));
    CHECK(std::abs(fd_h - tweedie::hessian(p, y, eta)) <= 1e-6 * std::max(1.0, std::abs(fd_h)));
  }
}

TEST_CASE("unit deviance") {
  const TweedieSpec s(1.5);
  CHECK(unit_deviance(s, v({3.0}), v({3.0}))(0) == doctest::Approx(0.0));
  CHECK(unit_deviance(s, v({1.0}), v({0.0}))(0) == doctest::Approx(4.0).epsilon(1e-14));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10);
  for (int k = 0; k < 100; ++k) {
    const double y = k % 4 == 0 ? 0.0 : u(rng), mu = u(rng);
    if (std::abs(y - mu) > 1e-6) CHECK(tweedie::unit_deviance(1.3, y, mu) > 0.0);
  }
  CHECK_THROWS_AS(unit_deviance(s, v({0.0}), v({1.0})), Error);
}

TEST_CASE("power outside (1,2) is rejected") {
  CHECK_THROWS_AS(TweedieSpec(1.0), Error);
  CHECK_THROWS_AS(TweedieSpec(2.0), Error);
  try {
    TweedieSpec bad(2.5);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PowerOutOfRange);
  }
}

TEST_CASE("power search") {
  SUBCASE("single candidate") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(200, 2);
    Eigen::VectorXd y = (x.col(0).array() + 1.5).matrix();
    const auto r = estimate_power(x, y, Eigen::VectorXd::Ones(200), {1.7});
    CHECK(r.power == 1.7);
    CHECK(r.grid.size() == 1);
  }
}
