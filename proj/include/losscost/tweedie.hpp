#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "losscost/error.hpp"

namespace losscost {

/// Tweedie exponential-dispersion family with log link, restricted to the
/// compound Poisson-Gamma regime 1 < power < 2.
class TweedieSpec {
 public:
  static constexpr double kMinPower = 1.01;
  static constexpr double kMaxPower = 1.99;

  explicit TweedieSpec(double power, double dispersion = 1.0) : power_(power), dispersion_(dispersion) {
    if (!(power > 1.0 && power < 2.0)) {
      throw Error(ErrorCode::PowerOutOfRange, "power must lie in (1,2), got " + std::to_string(power));
    }
    if (!(dispersion > 0.0)) throw Error(ErrorCode::InvalidConfig, "dispersion must be positive");
  }

  double power() const { return power_; }
  double dispersion() const { return dispersion_; }

 private:
  double power_;
  double dispersion_;
};

namespace tweedie {

// Per-row pieces of the dispersion-free negative log-likelihood
//   k(eta) = y e^{-(p-1) eta} / (p-1) + e^{(2-p) eta} / (2-p).

inline double kernel(double p, double y, double eta) {
  return y * std::exp(-(p - 1.0) * eta) / (p - 1.0) + std::exp((2.0 - p) * eta) / (2.0 - p);
}

/// dk/deta = mu^{1-p} (mu - y).
inline double gradient(double p, double y, double eta) {
  return -y * std::exp(-(p - 1.0) * eta) + std::exp((2.0 - p) * eta);
}

inline double hessian(double p, double y, double eta) {
  return (p - 1.0) * y * std::exp(-(p - 1.0) * eta) + (2.0 - p) * std::exp((2.0 - p) * eta);
}

inline double unit_deviance(double p, double y, double mu) {
  const double a = y > 0.0 ? std::pow(y, 2.0 - p) / ((1.0 - p) * (2.0 - p)) : 0.0;
  const double d = 2.0 * (a - y * std::pow(mu, 1.0 - p) / (1.0 - p) + std::pow(mu, 2.0 - p) / (2.0 - p));
  return d > 0.0 ? d : 0.0;
}

template <typename A, typename B>
void require_same_length(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ColumnMismatch, "vector lengths differ");
}

}  // namespace tweedie

/// Weighted dispersion-free negative log-likelihood; rows with zero weight contribute nothing.
template <typename Eta, typename Y, typename W>
double nll(const TweedieSpec& spec, const Eigen::MatrixBase<Eta>& eta, const Eigen::MatrixBase<Y>& y,
           const Eigen::MatrixBase<W>& w) {
  tweedie::require_same_length(eta, y);
  tweedie::require_same_length(eta, w);
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (w(i) == 0.0) continue;
    total += w(i) * tweedie::kernel(spec.power(), y(i), eta(i));
  }
  return total;
}

/// Per-row derivative of nll with respect to eta_i.
template <typename Eta, typename Y, typename W>
Eigen::VectorXd nll_grad(const TweedieSpec& spec, const Eigen::MatrixBase<Eta>& eta,
                         const Eigen::MatrixBase<Y>& y, const Eigen::MatrixBase<W>& w) {
  tweedie::require_same_length(eta, y);
  tweedie::require_same_length(eta, w);
  Eigen::VectorXd g(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    g(i) = w(i) == 0.0 ? 0.0 : w(i) * tweedie::gradient(spec.power(), y(i), eta(i));
  }
  return g;
}

template <typename Eta, typename Y, typename W>
Eigen::VectorXd nll_hess(const TweedieSpec& spec, const Eigen::MatrixBase<Eta>& eta,
                         const Eigen::MatrixBase<Y>& y, const Eigen::MatrixBase<W>& w) {
  tweedie::require_same_length(eta, y);
  tweedie::require_same_length(eta, w);
  Eigen::VectorXd h(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    h(i) = w(i) == 0.0 ? 0.0 : w(i) * tweedie::hessian(spec.power(), y(i), eta(i));
  }
  return h;
}

template <typename Mu, typename Y>
Eigen::VectorXd unit_deviance(const TweedieSpec& spec, const Eigen::MatrixBase<Mu>& mu,
                              const Eigen::MatrixBase<Y>& y) {
  tweedie::require_same_length(mu, y);
  Eigen::VectorXd d(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(mu(i) > 0.0)) throw Error(ErrorCode::InvalidConfig, "unit deviance needs mu > 0");
    d(i) = tweedie::unit_deviance(spec.power(), y(i), mu(i));
  }
  return d;
}

/// Weighted mean unit deviance, the natural scale-aware loss for model comparison.
template <typename Mu, typename Y, typename W>
double mean_deviance(const TweedieSpec& spec, const Eigen::MatrixBase<Mu>& mu, const Eigen::MatrixBase<Y>& y,
                     const Eigen::MatrixBase<W>& w) {
  const Eigen::VectorXd d = unit_deviance(spec, mu, y);
  return d.dot(w.derived().template cast<double>()) / w.sum();
}

/// Method-of-moments dispersion: weighted mean of squared Pearson residuals. Reporting only.
template <typename Mu, typename Y, typename W>
double estimate_dispersion(double power, const Eigen::MatrixBase<Mu>& mu, const Eigen::MatrixBase<Y>& y,
                           const Eigen::MatrixBase<W>& w) {
  tweedie::require_same_length(mu, y);
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double r = y(i) - mu(i);
    total += w(i) * r * r / std::pow(mu(i), power);
  }
  return total / static_cast<double>(mu.size());
}

struct PowerSearchOptions {
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
  int bins = 20;
  /// Feature index per column, so one-hot groups get a reference level in the refit.
  std::vector<std::size_t> column_feature;
};

struct PowerEstimate {
  double power = 1.5;
  std::vector<double> grid;
  /// Spread of log binned Pearson dispersion across fitted-mean bins; smaller is better.
  std::vector<double> criterion;
  /// Held-out weighted mean unit deviance at each candidate, reported alongside.
  std::vector<double> deviance;
};

/// Fits an unpenalized GLM at every candidate power and keeps the one whose held-out
/// Pearson dispersion is most homogeneous across bins of the fitted mean, i.e. the
/// power that best explains Var(Y) = phi mu^p. Candidates are clamped to
/// [TweedieSpec::kMinPower, TweedieSpec::kMaxPower]; ties go to the smaller power.
PowerEstimate estimate_power(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                             std::vector<double> grid, const PowerSearchOptions& options = {});

}  // namespace losscost
