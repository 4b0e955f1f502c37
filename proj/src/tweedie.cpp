#include "losscost/tweedie.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "losscost/glm.hpp"

namespace losscost {

namespace {

double log_dispersion_spread(const Eigen::VectorXd& mu, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                             double power, int bins) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(mu.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mu[a] < mu[b]; });
  const auto n = order.size();
  const auto nb = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(bins), n));
  std::vector<double> logs;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t lo = b * n / nb;
    const std::size_t hi = (b + 1) * n / nb;
    double total = 0.0;
    for (std::size_t r = lo; r < hi; ++r) {
      const auto i = order[r];
      const double e = y[i] - mu[i];
      total += w[i] * e * e / std::pow(mu[i], power);
    }
    if (hi > lo && total > 0.0) logs.push_back(std::log(total / static_cast<double>(hi - lo)));
  }
  if (logs.size() < 2) return 0.0;
  const double mean = std::accumulate(logs.begin(), logs.end(), 0.0) / static_cast<double>(logs.size());
  double var = 0.0;
  for (double v : logs) var += (v - mean) * (v - mean);
  return var / static_cast<double>(logs.size());
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  return out;
}

}  // namespace

PowerEstimate estimate_power(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                             std::vector<double> grid, const PowerSearchOptions& options) {
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "power grid is empty");
  for (auto& p : grid) p = std::clamp(p, TweedieSpec::kMinPower, TweedieSpec::kMaxPower);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  PowerEstimate est;
  est.grid = grid;
  if (grid.size() == 1) {
    est.power = grid.front();
    return est;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_hold = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(options.holdout_fraction * static_cast<double>(order.size()))), 1,
      order.size() - 1);
  std::vector<Eigen::Index> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<Eigen::Index> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());

  const Eigen::MatrixXd x_train = take_rows(x, train);
  const Eigen::VectorXd y_train = take_rows(y, train);
  const Eigen::VectorXd w_train = take_rows(w, train);
  const Eigen::MatrixXd x_hold = take_rows(x, hold);
  const Eigen::VectorXd y_hold = take_rows(y, hold);
  const Eigen::VectorXd w_hold = take_rows(w, hold);
  const std::vector<bool> all(static_cast<std::size_t>(x.cols()), true);

  double best = std::numeric_limits<double>::infinity();
  for (double p : grid) {
    const auto fit = refit_unpenalized(x_train, y_train, w_train, all, p, options.column_feature);
    const Eigen::VectorXd mu = fit.model.predict(x_hold);
    const double crit = log_dispersion_spread(mu, y_hold, w_hold, p, options.bins);
    est.criterion.push_back(crit);
    est.deviance.push_back(mean_deviance(TweedieSpec(p), mu, y_hold, w_hold));
    if (crit < best) {
      best = crit;
      est.power = p;
    }
  }
  return est;
}

}  // namespace losscost
