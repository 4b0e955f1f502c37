#include "losscost/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "losscost/error.hpp"
#include "losscost/tweedie.hpp"

namespace losscost {

namespace {

void require_pair(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs, Eigen::Index min_rows) {
  if (pred.size() != obs.size()) throw Error(ErrorCode::ColumnMismatch, "prediction and observation lengths differ");
  if (pred.size() < min_rows) throw Error(ErrorCode::InvalidConfig, "too few rows for the metric");
}

double gini_with_order(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs, bool reverse_ties) {
  require_pair(pred, obs, 2);
  const double total = obs.sum();
  if (!(total != 0.0)) throw Error(ErrorCode::DegenerateResponse, "Gini needs a nonzero observed total");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(pred.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (pred(a) != pred(b)) return pred(a) < pred(b);
    return reverse_ties ? a > b : false;
  });
  double weighted = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) weighted += static_cast<double>(i + 1) * obs(order[i]);
  const double n = static_cast<double>(pred.size());
  // 1 - 2/(N-1) (N - W/T) regrouped so the textbook examples come out exact.
  return (2.0 * (weighted / total) - n - 1.0) / (n - 1.0);
}

// Cut points 0 = c_0 < ... < c_B = n with every bin total inside [L, L + d] for some L, or empty if none is
// found. The cut indices reachable after b bins form one contiguous range whose ends move right as L grows,
// so the largest L whose range still reaches the end can be bisected.
std::vector<std::size_t> balanced_cuts(const std::vector<double>& prefix, std::size_t bins, double d) {
  const std::size_t n = prefix.size() - 1;
  const double total = prefix[n];
  auto first_at_least = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(prefix.begin(), prefix.end(), v) - prefix.begin());
  };
  auto last_at_most = [&](double v) {
    return static_cast<std::size_t>(std::upper_bound(prefix.begin(), prefix.end(), v) - prefix.begin()) - 1;
  };
  std::vector<std::size_t> lo(bins), hi(bins);
  auto reach = [&](double l) {
    lo[0] = hi[0] = 0;
    for (std::size_t b = 1; b < bins; ++b) {
      lo[b] = first_at_least(prefix[lo[b - 1]] + l);
      hi[b] = std::min(last_at_most(prefix[hi[b - 1]] + l + d), n);
      if (lo[b] > n || lo[b] > hi[b]) return false;
    }
    return prefix[lo[bins - 1]] <= total - l;
  };
  double good = 0.0, bad = total / static_cast<double>(bins) * (1.0 + 1e-12) + 1e-300;
  if (!reach(std::numeric_limits<double>::min())) return {};
  good = std::numeric_limits<double>::min();
  for (int it = 0; it < 200 && bad - good > 1e-15 * total; ++it) {
    const double mid = 0.5 * (good + bad);
    (reach(mid) ? good : bad) = mid;
  }
  const double l = good;
  if (!reach(l)) return {};

  // Same comparisons as the forward pass, so rounding cannot disagree with it.
  std::vector<std::size_t> cuts(bins + 1);
  cuts[bins] = n;
  for (std::size_t b = bins; b-- > 1;) {
    const double next = prefix[cuts[b + 1]];
    auto k = lo[b];
    while (k <= hi[b] && prefix[k] + l + d < next) ++k;
    if (k > hi[b] || !(prefix[k] + l <= next)) return {};
    cuts[b] = k;
  }
  cuts[0] = 0;
  return cuts;
}

}  // namespace

double gini_index(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) { return gini_with_order(pred, obs, false); }

double gini_index_reversed_ties(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  return gini_with_order(pred, obs, true);
}

double percentage_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  require_pair(pred, obs, 1);
  const double total = obs.sum();
  if (!(total != 0.0)) throw Error(ErrorCode::DegenerateResponse, "PE needs a nonzero observed total");
  return (pred.sum() - total) / total;
}

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  require_pair(pred, obs, 1);
  return std::sqrt((pred - obs).squaredNorm() / static_cast<double>(pred.size()));
}

double mae(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  require_pair(pred, obs, 1);
  return (pred - obs).cwiseAbs().sum() / static_cast<double>(pred.size());
}

EvalReport evaluate(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs, std::string label, std::string dataset) {
  EvalReport r;
  r.gini = gini_index(pred, obs);
  r.gini_tie_delta = gini_index_reversed_ties(pred, obs) - r.gini;
  r.pe = percentage_error(pred, obs);
  r.rmse = rmse(pred, obs);
  r.mae = mae(pred, obs);
  r.n = static_cast<std::size_t>(pred.size());
  r.label = std::move(label);
  r.dataset = std::move(dataset);
  return r;
}

LiftChart double_lift(const Eigen::VectorXd& observed, const Eigen::VectorXd& current, const Eigen::VectorXd& next,
                      const Eigen::VectorXd& exposure, std::size_t n_quantiles, LiftWeighting weighting) {
  const auto n = static_cast<std::size_t>(observed.size());
  if (current.size() != observed.size() || next.size() != observed.size() || exposure.size() != observed.size()) {
    throw Error(ErrorCode::ColumnMismatch, "lift chart inputs differ in length");
  }
  if (n_quantiles < 2) throw Error(ErrorCode::InvalidConfig, "n_quantiles must be >= 2");
  if (n < n_quantiles) throw Error(ErrorCode::InvalidConfig, "fewer rows than lift-chart bins");
  if ((current.array() <= 0.0).any()) {
    throw Error(ErrorCode::NonPositiveDenominator, "current predictions must be positive");
  }
  Eigen::VectorXd ratio = next.cwiseQuotient(current);
  Eigen::VectorXd size = weighting == LiftWeighting::Exposure ? exposure : Eigen::VectorXd::Ones(observed.size());

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ratio(a) < ratio(b); });

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + size(order[k]);
  const double widest = size.maxCoeff();
  std::vector<std::size_t> start;
  for (double d : {widest * (1.0 - 1e-9), widest, 1.5 * widest, 2.0 * widest}) {
    start = balanced_cuts(prefix, n_quantiles, d);
    if (!start.empty()) break;
  }
  if (start.empty()) throw Error(ErrorCode::InvalidConfig, "could not balance lift-chart bins");

  LiftChart chart;
  chart.bin_of_row.assign(n, 0);
  for (std::size_t b = 0; b + 1 < start.size(); ++b) {
    LiftBin bin;
    double w = 0.0, so = 0.0, sc = 0.0, sn = 0.0;
    for (std::size_t k = start[b]; k < start[b + 1]; ++k) {
      const auto r = order[k];
      chart.bin_of_row[static_cast<std::size_t>(r)] = b;
      bin.exposure += exposure(r);
      w += size(r);
      so += size(r) * observed(r);
      sc += size(r) * current(r);
      sn += size(r) * next(r);
      ++bin.rows;
    }
    bin.avg_observed = so / w;
    bin.avg_current = sc / w;
    bin.avg_new = sn / w;
    bin.ratio_low = ratio(order[start[b]]);
    bin.ratio_high = ratio(order[start[b + 1] - 1]);
    chart.bins.push_back(bin);
  }
  return chart;
}

std::uint64_t fold_seed(std::uint64_t plan_seed, std::size_t fold) {
  // splitmix64 finaliser over (seed, fold)
  std::uint64_t z = plan_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(fold) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

EvalReport aggregate(const std::vector<EvalReport>& folds, bool stddev) {
  EvalReport mean;
  const double k = static_cast<double>(folds.size());
  for (const auto& f : folds) {
    mean.gini += f.gini / k;
    mean.gini_tie_delta += f.gini_tie_delta / k;
    mean.pe += f.pe / k;
    mean.rmse += f.rmse / k;
    mean.mae += f.mae / k;
    mean.n += f.n;
  }
  if (!stddev) return mean;
  EvalReport sd;
  sd.n = mean.n;
  if (folds.size() < 2) return sd;
  auto sq = [](double v) { return v * v; };
  for (const auto& f : folds) {
    sd.gini += sq(f.gini - mean.gini);
    sd.gini_tie_delta += sq(f.gini_tie_delta - mean.gini_tie_delta);
    sd.pe += sq(f.pe - mean.pe);
    sd.rmse += sq(f.rmse - mean.rmse);
    sd.mae += sq(f.mae - mean.mae);
  }
  const double d = k - 1.0;
  sd.gini = std::sqrt(sd.gini / d);
  sd.gini_tie_delta = std::sqrt(sd.gini_tie_delta / d);
  sd.pe = std::sqrt(sd.pe / d);
  sd.rmse = std::sqrt(sd.rmse / d);
  sd.mae = std::sqrt(sd.mae / d);
  return sd;
}

}  // namespace

CvResult cross_validate(const PortfolioTable& table, const Recipe& recipe, const SplitPlan& plan,
                        const std::string& label) {
  SplitPlan p = plan;
  if (p.fold_assignment.size() != static_cast<std::size_t>(table.rows())) p = make_splits(table, plan);
  CvResult out;
  out.out_of_fold = Eigen::VectorXd::Zero(table.rows());
  for (std::size_t fold = 0; fold < p.folds(); ++fold) {
    const auto test_rows = p.rows_in(fold);
    const auto train_rows = p.rows_not_in(fold);
    if (test_rows.empty()) continue;
    const PortfolioTable train = table.subset(train_rows);
    const PortfolioTable test = table.subset(test_rows);
    const Predictor predict = recipe(train, fold_seed(p.seed, fold));
    const Eigen::VectorXd pred = predict(test);
    for (std::size_t k = 0; k < test_rows.size(); ++k) out.out_of_fold(test_rows[k]) = pred(static_cast<Eigen::Index>(k));
    out.folds.push_back(evaluate(pred, test.response, label, "fold" + std::to_string(fold)));
  }
  out.mean = aggregate(out.folds, false);
  out.mean.label = label;
  out.mean.dataset = "cv-mean";
  out.stddev = aggregate(out.folds, true);
  out.stddev.label = label;
  out.stddev.dataset = "cv-std";
  return out;
}

std::string to_string(SelectionMetric metric) {
  switch (metric) {
    case SelectionMetric::Mae: return "mae";
    case SelectionMetric::Rmse: return "rmse";
    case SelectionMetric::Gini: return "gini";
    case SelectionMetric::Deviance: return "deviance";
  }
  return "mae";
}

SelectionMetric parse_selection_metric(const std::string& text) {
  if (text == "mae") return SelectionMetric::Mae;
  if (text == "rmse") return SelectionMetric::Rmse;
  if (text == "gini") return SelectionMetric::Gini;
  if (text == "deviance") return SelectionMetric::Deviance;
  throw Error(ErrorCode::InvalidConfig, "unknown selection metric: " + text);
}

std::vector<ParamSet> expand_grid(const ParamGrid& grid) {
  std::vector<ParamSet> out{ParamSet{}};
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw Error(ErrorCode::InvalidConfig, "grid axis '" + name + "' is empty");
    std::vector<ParamSet> next;
    for (const auto& base : out) {
      for (double v : values) {
        ParamSet s = base;
        s.emplace_back(name, v);
        next.push_back(std::move(s));
      }
    }
    out = std::move(next);
  }
  return out;
}

GridResult grid_search(const PortfolioTable& table, const RecipeFamily& family, const ParamGrid& grid,
                       const SplitPlan& plan, SelectionMetric metric, double deviance_power) {
  const auto points = expand_grid(grid);
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "grid must be nonempty");
  SplitPlan p = plan;
  if (p.fold_assignment.size() != static_cast<std::size_t>(table.rows())) p = make_splits(table, plan);

  GridResult result;
  for (const auto& params : points) {
    GridPoint point;
    point.params = params;
    point.cv = cross_validate(table, family(params), p);
    double score = 0.0;
    std::size_t used = 0;
    for (std::size_t fold = 0; fold < p.folds(); ++fold) {
      const auto rows = p.rows_in(fold);
      if (rows.empty()) continue;
      const auto& rep = point.cv.folds[used++];
      double s = 0.0;
      switch (metric) {
        case SelectionMetric::Mae: s = rep.mae; break;
        case SelectionMetric::Rmse: s = rep.rmse; break;
        case SelectionMetric::Gini: s = rep.gini; break;
        case SelectionMetric::Deviance: {
          Eigen::VectorXd mu(static_cast<Eigen::Index>(rows.size())), y(mu.size()), w(mu.size());
          for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            mu(i) = point.cv.out_of_fold(rows[k]);
            y(i) = table.response(rows[k]);
            w(i) = table.exposure(rows[k]);
          }
          s = mean_deviance(TweedieSpec(deviance_power), mu, y, w);
          break;
        }
      }
      score += s;
    }
    point.score = score / static_cast<double>(used);
    result.trace.push_back(std::move(point));
  }

  const bool higher_better = metric == SelectionMetric::Gini;
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    const auto& cand = result.trace[i];
    const auto& best = result.trace[result.best_index];
    const bool better = higher_better ? cand.score > best.score : cand.score < best.score;
    const bool tie = cand.score == best.score;
    auto values = [](const ParamSet& s) {
      std::vector<double> v;
      for (const auto& kv : s) v.push_back(kv.second);
      return v;
    };
    if (better || (tie && values(cand.params) < values(best.params))) result.best_index = i;
  }
  result.best = result.trace[result.best_index].params;
  return result;
}

}  // namespace losscost
