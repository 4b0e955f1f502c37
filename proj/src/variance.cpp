#include "losscost/variance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "losscost/error.hpp"
#include "losscost/evaluate.hpp"

namespace losscost {

double population_variance(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

namespace {

void flag_negative(DecompositionReport& r) {
  const double floor = -0.01 * r.var_y;
  if (r.term_noise < floor) r.flags.push_back("NegativeTerm: term_noise");
  if (r.term_gain < floor) r.flags.push_back("NegativeTerm: term_gain");
  if (r.term_base < floor) r.flags.push_back("NegativeTerm: term_base");
}

double binned_gain(const Eigen::VectorXd& base, const Eigen::VectorXd& full, std::size_t bins) {
  const auto n = static_cast<std::size_t>(base.size());
  if (n == 0 || bins == 0) return 0.0;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return base(a) < base(b); });
  bins = std::min(bins, n);
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins, hi = (b + 1) * n / bins;
    double mean = 0.0;
    for (std::size_t k = lo; k < hi; ++k) mean += full(order[k]);
    mean /= static_cast<double>(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) total += (full(order[k]) - mean) * (full(order[k]) - mean);
  }
  return total / static_cast<double>(n);
}

}  // namespace

DecompositionReport decompose(const PortfolioTable& table, const std::vector<std::string>& block_base,
                              const std::vector<std::string>& block_added, const ModelSpec& recipe,
                              const SplitPlan& plan, std::size_t gain_bins) {
  for (const auto& a : block_added) {
    if (std::find(block_base.begin(), block_base.end(), a) != block_base.end()) {
      throw Error(ErrorCode::OverlappingBlocks, "feature '" + a + "' is in both blocks");
    }
  }
  SplitPlan p = plan;
  if (p.fold_assignment.size() != static_cast<std::size_t>(table.rows())) p = make_splits(table, plan);

  auto oof = [&](const std::vector<std::string>& features) {
    ModelSpec spec = recipe;
    spec.features = features;
    if (features.empty()) spec.kind = RecipeKind::Constant;
    return cross_validate(table, make_recipe(spec), p).out_of_fold;
  };

  DecompositionReport r;
  r.estimator = to_string(recipe.kind);
  r.folds = p.folds();
  r.seed = p.seed;
  r.n = static_cast<std::size_t>(table.rows());
  r.var_y = population_variance(table.response);
  const Eigen::VectorXd m_base = oof(block_base);
  r.term_base = population_variance(m_base);
  r.three_term = !block_added.empty();
  if (r.three_term) {
    std::vector<std::string> both = block_base;
    both.insert(both.end(), block_added.begin(), block_added.end());
    const Eigen::VectorXd m_full = oof(both);
    r.term_gain = population_variance(m_full) - r.term_base;
    r.gain_binned = binned_gain(m_base, m_full, gain_bins);
  }
  r.term_noise = r.var_y - r.term_base - r.term_gain;
  flag_negative(r);
  return r;
}

DecompositionReport oracle_decompose(const PortfolioTable& table, const GroundTruth& truth) {
  const Eigen::Index n = table.rows();
  if (truth.mu.size() != n || truth.mu_inhouse.size() != n || truth.noise_variance.size() != n ||
      truth.gain_variance.size() != n) {
    throw Error(ErrorCode::IdMismatch, "ground truth does not match the table rows");
  }
  DecompositionReport r;
  r.estimator = "oracle";
  r.n = static_cast<std::size_t>(n);
  r.var_y = population_variance(table.response);
  r.term_base = population_variance(truth.mu_inhouse);
  r.term_gain = truth.gain_variance.mean();
  r.term_noise = truth.noise_variance.mean();
  r.gain_binned = r.term_gain;

  const double ybar = table.response.mean();
  const double mbar = truth.mu_inhouse.mean();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dy = table.response(i) - ybar;
    const double dm = truth.mu_inhouse(i) - mbar;
    z(i) = dy * dy - truth.noise_variance(i) - truth.gain_variance(i) - dm * dm;
  }
  r.standard_error = n > 1 ? std::sqrt(population_variance(z) / static_cast<double>(n - 1)) : 0.0;
  flag_negative(r);
  return r;
}

}  // namespace losscost
