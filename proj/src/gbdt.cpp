#include "losscost/gbdt.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "losscost/config.hpp"
#include "losscost/error.hpp"
#include "losscost/io.hpp"
#include "losscost/tweedie.hpp"

namespace losscost {

std::string to_string(Objective objective) { return objective == Objective::Tweedie ? "tweedie" : "squared"; }

Objective parse_objective(const std::string& text) {
  if (text == "tweedie") return Objective::Tweedie;
  if (text == "squared") return Objective::Squared;
  throw Error(ErrorCode::InvalidConfig, "unknown objective: " + text);
}

void GbdtConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (n_estimators < 1) fail("n_estimators must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (num_leaves < 2) fail("num_leaves must be >= 2");
  if (max_depth < 1) fail("max_depth must be >= 1");
  if (max_depth < 63 && num_leaves > (std::size_t{1} << max_depth)) fail("num_leaves must not exceed 2^max_depth");
  if (min_child_samples < 1) fail("min_child_samples must be >= 1");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) fail("feature_fraction must lie in (0,1]");
  if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample must lie in (0,1]");
  if (subsample_for_bin < 2) fail("subsample_for_bin must be >= 2");
  if (max_bins < 2 || max_bins > 65000) fail("max_bins must lie in [2, 65000]");
  if (!(reg_alpha >= 0.0) || !(reg_lambda >= 0.0)) fail("regularization must be >= 0");
  if (goss.enabled) {
    const double a = goss.top_rate, b = goss.other_rate;
    if (!(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 1.0) || a + b > 1.0 + 1e-12) {
      fail("GOSS needs 0 < top_rate, other_rate < 1 and top_rate + other_rate <= 1");
    }
  }
  if (objective == Objective::Tweedie && !(power > 1.0 && power < 2.0)) {
    throw Error(ErrorCode::PowerOutOfRange, "Tweedie power must lie in (1,2)");
  }
}

int BinMapper::bin_of(double x) const {
  if (std::isnan(x)) return missing_bin();
  return static_cast<int>(std::lower_bound(boundaries.begin(), boundaries.end(), x) - boundaries.begin());
}

namespace {

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m < b ? m : a;
}

double soft_threshold(double v, double alpha) {
  if (v > alpha) return v - alpha;
  if (v < -alpha) return v + alpha;
  return 0.0;
}

// First `k` entries of a seeded Fisher-Yates shuffle of 0..n-1, sorted.
std::vector<Eigen::Index> sample_without_replacement(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::size_t ceil_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
}

}  // namespace

std::vector<BinMapper> build_bins(const Eigen::MatrixXd& x, std::size_t subsample_for_bin, int max_bins,
                                  std::uint64_t seed) {
  if (max_bins < 2) throw Error(ErrorCode::InvalidConfig, "max_bins must be >= 2");
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<Eigen::Index> rows;
  if (n > subsample_for_bin) {
    std::mt19937_64 rng(seed);
    rows = sample_without_replacement(n, subsample_for_bin, rng);
  } else {
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  }

  std::vector<BinMapper> out(static_cast<std::size_t>(x.cols()));
  std::vector<double> vals;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto& m = out[static_cast<std::size_t>(j)];
    m.has_missing = x.col(j).array().isNaN().any();
    vals.clear();
    for (auto r : rows) {
      if (!std::isnan(x(r, j))) vals.push_back(x(r, j));
    }
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    std::vector<double> distinct = vals;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
      m.values = distinct;
      for (std::size_t k = 0; k + 1 < distinct.size(); ++k) m.boundaries.push_back(midpoint(distinct[k], distinct[k + 1]));
      continue;
    }
    const double last = static_cast<double>(vals.size() - 1);
    for (int i = 1; i < max_bins; ++i) {
      const double pos = last * i / max_bins;
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, vals.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      const double q = vals[lo] + frac * (vals[hi] - vals[lo]);
      if (q >= vals.back()) continue;
      if (m.boundaries.empty() || q > m.boundaries.back()) m.boundaries.push_back(q);
    }
  }
  return out;
}

std::vector<Bundle> bundle_features(const Eigen::MatrixXd& x, const std::vector<BinMapper>& bins,
                                    std::size_t conflict_budget) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<std::uint32_t>> nonzero(static_cast<std::size_t>(x.cols()));
  std::vector<std::size_t> order;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!bins[static_cast<std::size_t>(j)].splittable()) continue;
    auto& nz = nonzero[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(static_cast<Eigen::Index>(i), j);
      if (v != 0.0 || std::isnan(v)) nz.push_back(static_cast<std::uint32_t>(i));
    }
    order.push_back(static_cast<std::size_t>(j));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return nonzero[a].size() > nonzero[b].size(); });

  struct Open {
    Bundle bundle;
    std::vector<char> used;
    std::size_t used_count = 0;
    std::size_t conflicts = 0;
    int total_bins = 1;
  };
  std::vector<Open> open;
  for (auto c : order) {
    const auto& nz = nonzero[c];
    bool placed = false;
    for (auto& b : open) {
      if (b.total_bins + bins[c].bins() - 1 > 65535) continue;
      // Pigeonhole lower bound on the overlap.
      if (nz.size() + b.used_count > n + conflict_budget - b.conflicts) continue;
      std::size_t clash = 0;
      for (auto r : nz) {
        if (b.used[r] && ++clash + b.conflicts > conflict_budget) break;
      }
      if (clash + b.conflicts > conflict_budget) continue;
      b.conflicts += clash;
      for (auto r : nz) {
        if (!b.used[r]) {
          b.used[r] = 1;
          ++b.used_count;
        }
      }
      b.bundle.columns.push_back(c);
      b.total_bins += bins[c].bins() - 1;
      placed = true;
      break;
    }
    if (!placed) {
      Open b;
      b.used.assign(n, 0);
      for (auto r : nz) b.used[r] = 1;
      b.used_count = nz.size();
      b.bundle.columns.push_back(c);
      b.total_bins = 1 + bins[c].bins() - 1;
      open.push_back(std::move(b));
    }
  }
  std::vector<Bundle> out;
  for (auto& b : open) {
    std::sort(b.bundle.columns.begin(), b.bundle.columns.end());
    out.push_back(std::move(b.bundle));
  }
  std::sort(out.begin(), out.end(), [](const Bundle& a, const Bundle& b) { return a.columns[0] < b.columns[0]; });
  return out;
}

BinnedMatrix::BinnedMatrix(const Eigen::MatrixXd& x, const std::vector<BinMapper>& bins,
                           const std::vector<Bundle>& bundles)
    : rows_(static_cast<std::size_t>(x.rows())) {
  const auto cols = static_cast<std::size_t>(x.cols());
  column_group_.assign(cols, std::numeric_limits<std::size_t>::max());
  column_slot_.assign(cols, 0);
  std::vector<bool> covered(cols, false);
  std::vector<Bundle> layout = bundles;
  for (const auto& b : bundles) {
    for (auto c : b.columns) covered[c] = true;
  }
  for (std::size_t c = 0; c < cols; ++c) {
    if (!covered[c]) layout.push_back(Bundle{{c}});
  }
  std::sort(layout.begin(), layout.end(), [](const Bundle& a, const Bundle& b) { return a.columns[0] < b.columns[0]; });

  for (const auto& b : layout) {
    Group g;
    g.columns = b.columns;
    g.bundled = b.columns.size() > 1;
    g.total_bins = g.bundled ? 1 : 0;
    for (std::size_t k = 0; k < g.columns.size(); ++k) {
      const auto& m = bins[g.columns[k]];
      g.bins.push_back(m.bins());
      g.default_bin.push_back(m.default_bin());
      g.offset.push_back(g.total_bins);
      g.total_bins += g.bundled ? m.bins() - 1 : m.bins();
      column_group_[g.columns[k]] = groups_.size();
      column_slot_[g.columns[k]] = k;
    }
    if (g.total_bins > 65535) throw Error(ErrorCode::InvalidConfig, "too many bins in one column group");
    g.data.assign(rows_, 0);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t k = 0; k < g.columns.size(); ++k) {
        const int b = bins[g.columns[k]].bin_of(x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g.columns[k])));
        if (!g.bundled) {
          g.data[i] = static_cast<std::uint16_t>(b);
        } else if (b != g.default_bin[k] && g.data[i] == 0) {
          g.data[i] = static_cast<std::uint16_t>(g.offset[k] + b - (b > g.default_bin[k] ? 1 : 0));
        }
      }
    }
    groups_.push_back(std::move(g));
  }
}

int BinnedMatrix::slot(std::size_t column, int b) const {
  const auto& g = groups_[column_group_[column]];
  const auto k = column_slot_[column];
  if (!g.bundled) return b;
  if (b == g.default_bin[k]) return -1;
  return g.offset[k] + b - (b > g.default_bin[k] ? 1 : 0);
}

int BinnedMatrix::bin(std::size_t row, std::size_t column) const {
  const auto& g = groups_[column_group_[column]];
  const auto k = column_slot_[column];
  const int v = g.data[row];
  if (!g.bundled) return v;
  const int lo = g.offset[k];
  const int hi = lo + g.bins[k] - 1;
  if (v < lo || v >= hi) return g.default_bin[k];
  const int rank = v - lo;
  return rank + (rank >= g.default_bin[k] ? 1 : 0);
}

std::vector<int> BinnedMatrix::unbundle(std::size_t column) const {
  std::vector<int> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = bin(i, column);
  return out;
}

GossSample goss_sample(const Eigen::VectorXd& gradients, double top_rate, double other_rate, std::uint64_t seed) {
  if (!(top_rate > 0.0 && top_rate < 1.0) || !(other_rate > 0.0 && other_rate < 1.0) ||
      top_rate + other_rate > 1.0 + 1e-12) {
    throw Error(ErrorCode::InvalidConfig, "GOSS rates out of range");
  }
  const auto n = static_cast<std::size_t>(gradients.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(gradients(a)) > std::abs(gradients(b)); });
  const std::size_t top = std::min(n, ceil_count(top_rate, n));
  const std::size_t other = std::min(n - top, ceil_count(other_rate, n));
  std::mt19937_64 rng(seed);
  const auto picked = sample_without_replacement(n - top, other, rng);

  std::vector<std::pair<Eigen::Index, double>> kept;
  kept.reserve(top + other);
  const double boost = (1.0 - top_rate) / other_rate;
  for (std::size_t i = 0; i < top; ++i) kept.emplace_back(order[i], 1.0);
  for (auto p : picked) kept.emplace_back(order[top + static_cast<std::size_t>(p)], boost);
  std::sort(kept.begin(), kept.end());

  GossSample s;
  s.rows.reserve(kept.size());
  s.multipliers.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    s.rows.push_back(kept[i].first);
    s.multipliers(static_cast<Eigen::Index>(i)) = kept[i].second;
  }
  return s;
}

Eigen::VectorXd GbdtModel::predict_link(const Eigen::MatrixXd& x, std::size_t n_trees) const {
  if (x.cols() != n_columns) throw Error(ErrorCode::ColumnMismatch, "matrix width does not match the model");
  n_trees = std::min(n_trees, trees.size());
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), f0);
  for (std::size_t b = 0; b < n_trees; ++b) {
    const double rate = learning_rates[b];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double step = rate * trees[b].predict_row(x.row(i));
      eta(i) = eta(i) + step;
    }
  }
  return eta;
}

Eigen::VectorXd predict_gbdt(const GbdtModel& model, const Eigen::MatrixXd& x, std::size_t n_trees) {
  Eigen::VectorXd eta = model.predict_link(x, n_trees);
  if (model.objective == Objective::Squared) return eta;
  return eta.array().exp().matrix();
}

Eigen::VectorXd predict_gbdt(const GbdtModel& model, const Eigen::MatrixXd& x) {
  return predict_gbdt(model, x, model.trees.size());
}

double objective_loss(Objective objective, double power, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w) {
  const double total = w.sum();
  if (objective == Objective::Tweedie) return nll(TweedieSpec(power), eta, y, w) / total;
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double r = y(i) - eta(i);
    s += 0.5 * w(i) * r * r;
  }
  return s / total;
}

namespace {

struct Bin {
  double s = 0.0;  // sum of weight * target
  double w = 0.0;  // sum of weight
  double n = 0.0;  // row count
};

struct Split {
  int column = -1;
  int last_left_bin = -1;
  double threshold = 0.0;
  double gain = 0.0;
  bool missing_left = true;
};

struct Leaf {
  int node = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  int depth = 0;
  Bin total;
  double g = 0.0;
  double h = 0.0;
  std::vector<Bin> hist;
  std::optional<Split> best;
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedMatrix& binned, const std::vector<BinMapper>& bins, const GbdtConfig& config)
      : binned_(binned), bins_(bins), config_(config) {
    group_start_.resize(binned.groups() + 1, 0);
    for (std::size_t g = 0; g < binned.groups(); ++g) {
      group_start_[g + 1] = group_start_[g] + static_cast<std::size_t>(binned.group_bins(g));
    }
  }

  // rows: sampled rows in ascending order; target/weight/grad/hess are full-length
  // vectors already multiplied by the sampling multiplier.
  Tree build(std::vector<Eigen::Index> rows, const std::vector<std::size_t>& columns, const Eigen::VectorXd& target,
             const Eigen::VectorXd& weight, const Eigen::VectorXd& grad, const Eigen::VectorXd& hess) {
    rows_ = std::move(rows);
    columns_ = columns;
    target_ = &target;
    weight_ = &weight;
    grad_ = &grad;
    hess_ = &hess;
    active_.assign(binned_.groups(), false);
    for (auto c : columns_) active_[binned_.group_of(c)] = true;

    Tree tree;
    tree.nodes.emplace_back();
    std::vector<Leaf> leaves;
    Leaf root;
    root.node = 0;
    root.begin = 0;
    root.end = rows_.size();
    init_leaf(root);
    build_hist(root);
    root.best = find_split(root);
    leaves.push_back(std::move(root));

    while (leaves.size() < config_.num_leaves) {
      int pick = -1;
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (!leaves[k].best) continue;
        if (pick < 0 || leaves[k].best->gain > leaves[static_cast<std::size_t>(pick)].best->gain ||
            (leaves[k].best->gain == leaves[static_cast<std::size_t>(pick)].best->gain &&
             leaves[k].node < leaves[static_cast<std::size_t>(pick)].node)) {
          pick = static_cast<int>(k);
        }
      }
      if (pick < 0) break;
      Leaf parent = std::move(leaves[static_cast<std::size_t>(pick)]);
      const Split split = *parent.best;
      const auto column = static_cast<std::size_t>(split.column);
      const int missing = bins_[column].missing_bin();
      auto mid = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(parent.begin),
                                       rows_.begin() + static_cast<std::ptrdiff_t>(parent.end), [&](Eigen::Index r) {
                                         const int b = binned_.bin(static_cast<std::size_t>(r), column);
                                         return b == missing ? split.missing_left : b <= split.last_left_bin;
                                       });
      const auto cut = static_cast<std::size_t>(mid - rows_.begin());

      Leaf left, right;
      left.begin = parent.begin;
      left.end = cut;
      right.begin = cut;
      right.end = parent.end;
      left.depth = right.depth = parent.depth + 1;
      left.node = static_cast<int>(tree.nodes.size());
      right.node = left.node + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& pn = tree.nodes[static_cast<std::size_t>(parent.node)];
      pn.feature = split.column;
      pn.threshold = split.threshold;
      pn.missing_left = split.missing_left;
      pn.gain = split.gain;
      pn.left = left.node;
      pn.right = right.node;
      pn.value = leaf_value(parent);

      init_leaf(left);
      init_leaf(right);
      Leaf& small = (left.end - left.begin) <= (right.end - right.begin) ? left : right;
      Leaf& large = &small == &left ? right : left;
      build_hist(small);
      large.hist = std::move(parent.hist);
      for (std::size_t k = 0; k < large.hist.size(); ++k) {
        large.hist[k].s -= small.hist[k].s;
        large.hist[k].w -= small.hist[k].w;
        large.hist[k].n -= small.hist[k].n;
      }
      left.best = find_split(left);
      right.best = find_split(right);
      leaves.erase(leaves.begin() + pick);
      leaves.push_back(std::move(left));
      leaves.push_back(std::move(right));
    }
    for (auto& leaf : leaves) {
      auto& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
      node.value = leaf_value(leaf);
    }
    return tree;
  }

 private:
  void init_leaf(Leaf& leaf) const {
    for (std::size_t k = leaf.begin; k < leaf.end; ++k) {
      const auto r = rows_[k];
      leaf.total.s += (*weight_)(r) * (*target_)(r);
      leaf.total.w += (*weight_)(r);
      leaf.total.n += 1.0;
      leaf.g += (*grad_)(r);
      leaf.h += (*hess_)(r);
    }
  }

  double leaf_value(const Leaf& leaf) const {
    if (config_.leaf_mode == LeafMode::Average) {
      const double den = leaf.total.w + config_.reg_lambda;
      return den > 0.0 ? soft_threshold(leaf.total.s, config_.reg_alpha) / den : 0.0;
    }
    const double den = leaf.h + config_.reg_lambda;
    return den > 0.0 ? -soft_threshold(leaf.g, config_.reg_alpha) / den : 0.0;
  }

  void build_hist(Leaf& leaf) const {
    leaf.hist.assign(group_start_.back(), Bin{});
    for (std::size_t g = 0; g < binned_.groups(); ++g) {
      if (!active_[g]) continue;
      Bin* h = leaf.hist.data() + group_start_[g];
      for (std::size_t k = leaf.begin; k < leaf.end; ++k) {
        const auto r = rows_[k];
        Bin& b = h[binned_.group_bin(static_cast<std::size_t>(r), g)];
        b.s += (*weight_)(r) * (*target_)(r);
        b.w += (*weight_)(r);
        b.n += 1.0;
      }
    }
  }

  double score(double s, double w) const {
    const double t = soft_threshold(s, config_.reg_alpha);
    const double den = w + config_.reg_lambda;
    return den > 0.0 ? t * t / den : 0.0;
  }

  std::optional<Split> find_split(const Leaf& leaf) const {
    const auto mcs = static_cast<double>(config_.min_child_samples);
    if (leaf.depth >= config_.max_depth || leaf.total.n < 2.0 * mcs) return std::nullopt;
    const double parent_score = score(leaf.total.s, leaf.total.w);
    std::optional<Split> best;
    std::vector<Bin> h;
    for (auto c : columns_) {
      const auto& m = bins_[c];
      if (!m.splittable()) continue;
      const int nb = m.bins();
      const int vb = m.value_bins();
      const int def = m.default_bin();
      const std::size_t base = group_start_[binned_.group_of(c)];
      h.assign(static_cast<std::size_t>(nb), Bin{});
      Bin rest;
      for (int b = 0; b < nb; ++b) {
        if (b == def) continue;
        const int sl = binned_.slot(c, b);
        h[static_cast<std::size_t>(b)] = leaf.hist[base + static_cast<std::size_t>(sl)];
        rest.s += h[static_cast<std::size_t>(b)].s;
        rest.w += h[static_cast<std::size_t>(b)].w;
        rest.n += h[static_cast<std::size_t>(b)].n;
      }
      Bin& d = h[static_cast<std::size_t>(def)];
      d.n = leaf.total.n - rest.n;
      if (d.n > 0.0) {
        d.s = leaf.total.s - rest.s;
        d.w = leaf.total.w - rest.w;
      }
      const Bin miss = m.has_missing ? h[static_cast<std::size_t>(m.missing_bin())] : Bin{};
      const double w_nm = leaf.total.w - miss.w;
      const double s_nm = leaf.total.s - miss.s;
      const double n_nm = leaf.total.n - miss.n;

      std::vector<int> next(static_cast<std::size_t>(vb), -1);
      int upcoming = -1;
      for (int b = vb - 1; b >= 0; --b) {
        next[static_cast<std::size_t>(b)] = upcoming;
        if (h[static_cast<std::size_t>(b)].n > 0.0) upcoming = b;
      }

      double sl = 0.0, wl = 0.0, nl = 0.0;
      for (int b = 0; b + 1 < vb; ++b) {
        const Bin& cur = h[static_cast<std::size_t>(b)];
        sl += cur.s;
        wl += cur.w;
        nl += cur.n;
        if (!(cur.n > 0.0) || next[static_cast<std::size_t>(b)] < 0) continue;
        const double wr = w_nm - wl;
        const bool miss_left = wl >= wr;
        const double SL = sl + (miss_left ? miss.s : 0.0);
        const double WL = wl + (miss_left ? miss.w : 0.0);
        const double NL = nl + (miss_left ? miss.n : 0.0);
        const double SR = (s_nm - sl) + (miss_left ? 0.0 : miss.s);
        const double WR = wr + (miss_left ? 0.0 : miss.w);
        const double NR = (n_nm - nl) + (miss_left ? 0.0 : miss.n);
        if (NL < mcs || NR < mcs || !(WL > 0.0) || !(WR > 0.0)) continue;
        const double children = score(SL, WL) + score(SR, WR);
        const double gain = children - parent_score;
        if (!(gain > 1e-12 * children)) continue;
        if (!best || gain > best->gain + 1e-12 * children) {
          const int upper = next[static_cast<std::size_t>(b)];
          const double threshold = m.exact() ? midpoint(m.values[static_cast<std::size_t>(b)],
                                                        m.values[static_cast<std::size_t>(upper)])
                                             : m.boundaries[static_cast<std::size_t>(b)];
          best = Split{static_cast<int>(c), b, threshold, gain, miss_left};
        }
      }
    }
    return best;
  }

  const BinnedMatrix& binned_;
  const std::vector<BinMapper>& bins_;
  const GbdtConfig& config_;
  std::vector<std::size_t> group_start_;
  std::vector<Eigen::Index> rows_;
  std::vector<std::size_t> columns_;
  std::vector<bool> active_;
  const Eigen::VectorXd* target_ = nullptr;
  const Eigen::VectorXd* weight_ = nullptr;
  const Eigen::VectorXd* grad_ = nullptr;
  const Eigen::VectorXd* hess_ = nullptr;
};

void gradients(Objective objective, double p, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
               const Eigen::VectorXd& w, Eigen::VectorXd& g, Eigen::VectorXd& h) {
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (objective == Objective::Tweedie) {
      g(i) = w(i) * tweedie::gradient(p, y(i), eta(i));
      h(i) = w(i) * tweedie::hessian(p, y(i), eta(i));
    } else {
      g(i) = w(i) * (eta(i) - y(i));
      h(i) = w(i);
    }
  }
}

}  // namespace

GbdtFit fit_gbdt(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                 const GbdtConfig& config, const GbdtFitOptions& options) {
  config.validate();
  if (y.size() != x.rows() || w.size() != x.rows()) throw Error(ErrorCode::ColumnMismatch, "y and w must match rows");
  if (x.rows() == 0) throw Error(ErrorCode::InvalidConfig, "cannot fit on zero rows");
  if ((w.array() < 0.0).any() || !(w.sum() > 0.0)) throw Error(ErrorCode::NonPositiveExposure, "weights must be >= 0 with a positive sum");
  const auto n = static_cast<std::size_t>(x.rows());
  const double p = config.power;

  GbdtFit fit;
  auto& model = fit.model;
  model.power = p;
  model.objective = config.objective;
  model.n_columns = x.cols();
  model.config = config;

  const double wsum = w.sum();
  const double wy = w.dot(y);
  if (config.objective == Objective::Tweedie) {
    if (!(wy > 0.0)) {
      model.f0 = std::log(DBL_MIN);
      fit.trace.warnings.push_back("DegenerateData: every response is zero; returning the intercept-only model");
      fit.trace.train_loss.push_back(objective_loss(config.objective, p, Eigen::VectorXd::Constant(x.rows(), model.f0), y, w));
      return fit;
    }
    model.f0 = std::log(wy / wsum);
  } else {
    model.f0 = wy / wsum;
  }

  model.bins = build_bins(x, config.subsample_for_bin, config.max_bins, config.seed);
  std::vector<Bundle> bundles;
  if (config.efb) bundles = bundle_features(x, model.bins, config.conflict_budget);
  const BinnedMatrix binned(x, model.bins, bundles);

  std::vector<std::size_t> splittable;
  for (std::size_t c = 0; c < model.bins.size(); ++c) {
    if (model.bins[c].splittable()) splittable.push_back(c);
  }

  std::mt19937_64 rng(config.seed);
  TreeBuilder builder(binned, model.bins, config);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), model.f0);
  Eigen::VectorXd g(x.rows()), h(x.rows()), target(x.rows()), weight(x.rows()), mg(x.rows()), mh(x.rows());

  std::optional<Eigen::VectorXd> valid_eta;
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t best_count = 0;
  if (options.validation) {
    const auto& v = *options.validation;
    if (v.x.cols() != x.cols()) throw Error(ErrorCode::ColumnMismatch, "validation width differs");
    valid_eta = Eigen::VectorXd::Constant(v.x.rows(), model.f0);
    best_valid = objective_loss(config.objective, p, *valid_eta, v.y, v.w);
    fit.trace.valid_loss.push_back(best_valid);
  }

  fit.trace.train_loss.push_back(objective_loss(config.objective, p, eta, y, w));
  if (options.record_stages) fit.trace.stage_link.push_back(eta);

  for (std::size_t stage = 0; stage < config.n_estimators; ++stage) {
    gradients(config.objective, p, eta, y, w, g, h);

    std::vector<Eigen::Index> rows;
    Eigen::VectorXd mult = Eigen::VectorXd::Zero(x.rows());
    if (config.goss.enabled) {
      const auto s = goss_sample(g, config.goss.top_rate, config.goss.other_rate, rng());
      rows = s.rows;
      for (std::size_t k = 0; k < rows.size(); ++k) mult(rows[k]) = s.multipliers(static_cast<Eigen::Index>(k));
    } else if (config.subsample < 1.0) {
      const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.subsample * static_cast<double>(n))));
      rows = sample_without_replacement(n, k, rng);
      for (auto r : rows) mult(r) = 1.0;
    } else {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
      mult.setOnes();
    }

    std::vector<std::size_t> columns = splittable;
    if (config.feature_fraction < 1.0 && !columns.empty()) {
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(config.feature_fraction * static_cast<double>(columns.size()))));
      const auto pick = sample_without_replacement(columns.size(), k, rng);
      std::vector<std::size_t> chosen;
      for (auto i : pick) chosen.push_back(columns[static_cast<std::size_t>(i)]);
      columns = std::move(chosen);
    }

    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      target(i) = w(i) > 0.0 ? -g(i) / w(i) : 0.0;
      weight(i) = w(i) * mult(i);
      mg(i) = g(i) * mult(i);
      mh(i) = h(i) * mult(i);
    }

    Tree tree = builder.build(std::move(rows), columns, target, weight, mg, mh);
    const double rate = config.learning_rate;
    for (auto& node : tree.nodes) {
      node.cover = 0.0;
      node.count = 0;
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      int at = 0;
      while (true) {
        auto& node = tree.nodes[static_cast<std::size_t>(at)];
        node.cover += w(i);
        ++node.count;
        if (node.is_leaf()) break;
        const double v = x(i, node.feature);
        at = (std::isnan(v) ? node.missing_left : v <= node.threshold) ? node.left : node.right;
      }
      const double step = rate * tree.nodes[static_cast<std::size_t>(at)].value;
      eta(i) = eta(i) + step;
    }
    model.trees.push_back(std::move(tree));
    model.learning_rates.push_back(rate);
    fit.trace.train_loss.push_back(objective_loss(config.objective, p, eta, y, w));
    if (options.record_stages) fit.trace.stage_link.push_back(eta);

    if (valid_eta) {
      const auto& v = *options.validation;
      const Tree& last = model.trees.back();
      for (Eigen::Index i = 0; i < v.x.rows(); ++i) {
        const double step = rate * last.predict_row(v.x.row(i));
        (*valid_eta)(i) = (*valid_eta)(i) + step;
      }
      const double loss = objective_loss(config.objective, p, *valid_eta, v.y, v.w);
      fit.trace.valid_loss.push_back(loss);
      if (loss < best_valid) {
        best_valid = loss;
        best_count = model.trees.size();
      }
      if (config.early_stopping_rounds > 0 && model.trees.size() - best_count >= config.early_stopping_rounds) break;
    }
  }

  if (valid_eta && config.early_stopping_rounds > 0) {
    model.trees.resize(best_count);
    model.learning_rates.resize(best_count);
  }
  fit.trace.best_iteration = model.trees.size();
  return fit;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, '\t')) out.push_back(cell);
  return out;
}

std::vector<std::string> expect(std::istream& in, const std::string& key, std::size_t min_fields) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "model file truncated before " + key);
  auto f = split_tabs(line);
  if (f.empty() || f[0] != key || f.size() < min_fields) {
    throw Error(ErrorCode::ParseError, "expected '" + key + "' record, got: " + line);
  }
  return f;
}

}  // namespace

void save_gbdt(std::ostream& out, const GbdtModel& model) {
  const auto& c = model.config;
  out << "losscost-gbdt\t1\n";
  out << "objective\t" << to_string(model.objective) << '\n';
  out << "power\t" << format_exact(model.power) << '\n';
  out << "f0\t" << format_exact(model.f0) << '\n';
  out << "columns\t" << model.n_columns << '\n';
  out << "config\tn_estimators=" << c.n_estimators << "\tlearning_rate=" << format_exact(c.learning_rate)
      << "\tnum_leaves=" << c.num_leaves << "\tmax_depth=" << c.max_depth
      << "\tmin_child_samples=" << c.min_child_samples << "\tfeature_fraction=" << format_exact(c.feature_fraction)
      << "\tsubsample=" << format_exact(c.subsample) << "\tsubsample_for_bin=" << c.subsample_for_bin
      << "\tmax_bins=" << c.max_bins << "\treg_alpha=" << format_exact(c.reg_alpha)
      << "\treg_lambda=" << format_exact(c.reg_lambda) << "\tgoss=" << (c.goss.enabled ? 1 : 0)
      << "\ttop_rate=" << format_exact(c.goss.top_rate) << "\tother_rate=" << format_exact(c.goss.other_rate)
      << "\tefb=" << (c.efb ? 1 : 0) << "\tconflict_budget=" << c.conflict_budget
      << "\tleaf_mode=" << (c.leaf_mode == LeafMode::Newton ? "newton" : "average") << "\tseed=" << c.seed
      << "\tearly_stopping_rounds=" << c.early_stopping_rounds << '\n';
  out << "bins\t" << model.bins.size() << '\n';
  for (const auto& m : model.bins) {
    out << "bin\t" << (m.has_missing ? 1 : 0) << '\t' << m.boundaries.size() << '\t' << m.values.size();
    for (double b : m.boundaries) out << '\t' << format_exact(b);
    for (double v : m.values) out << '\t' << format_exact(v);
    out << '\n';
  }
  out << "trees\t" << model.trees.size() << '\n';
  for (std::size_t b = 0; b < model.trees.size(); ++b) {
    out << "rate\t" << format_exact(model.learning_rates[b]) << '\n';
    write_tree(out, model.trees[b]);
  }
}

GbdtModel load_gbdt(std::istream& in) {
  GbdtModel model;
  const auto head = expect(in, "losscost-gbdt", 2);
  if (head[1] != "1") throw Error(ErrorCode::ParseError, "unsupported gbdt model version " + head[1]);
  model.objective = parse_objective(expect(in, "objective", 2)[1]);
  model.power = parse_double(expect(in, "power", 2)[1], "power");
  model.f0 = parse_double(expect(in, "f0", 2)[1], "f0");
  model.n_columns = parse_int(expect(in, "columns", 2)[1], "columns");

  auto& c = model.config;
  for (const auto& kv : [&] {
         auto f = expect(in, "config", 1);
         f.erase(f.begin());
         return f;
       }()) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "bad config entry " + kv);
    const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
    if (k == "n_estimators") c.n_estimators = static_cast<std::size_t>(parse_int(v, k));
    else if (k == "learning_rate") c.learning_rate = parse_double(v, k);
    else if (k == "num_leaves") c.num_leaves = static_cast<std::size_t>(parse_int(v, k));
    else if (k == "max_depth") c.max_depth = static_cast<int>(parse_int(v, k));
    else if (k == "min_child_samples") c.min_child_samples = static_cast<std::size_t>(parse_int(v, k));
    else if (k == "feature_fraction") c.feature_fraction = parse_double(v, k);
    else if (k == "subsample") c.subsample = parse_double(v, k);
    else if (k == "subsample_for_bin") c.subsample_for_bin = static_cast<std::size_t>(parse_int(v, k));
    else if (k == "max_bins") c.max_bins = static_cast<int>(parse_int(v, k));
    else if (k == "reg_alpha") c.reg_alpha = parse_double(v, k);
    else if (k == "reg_lambda") c.reg_lambda = parse_double(v, k);
    else if (k == "goss") c.goss.enabled = v == "1";
    else if (k == "top_rate") c.goss.top_rate = parse_double(v, k);
    else if (k == "other_rate") c.goss.other_rate = parse_double(v, k);
    else if (k == "efb") c.efb = v == "1";
    else if (k == "conflict_budget") c.conflict_budget = static_cast<std::size_t>(parse_int(v, k));
    else if (k == "leaf_mode") c.leaf_mode = v == "average" ? LeafMode::Average : LeafMode::Newton;
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_int(v, k));
    else if (k == "early_stopping_rounds") c.early_stopping_rounds = static_cast<std::size_t>(parse_int(v, k));
  }
  c.power = model.power;
  c.objective = model.objective;

  const auto nbins = static_cast<std::size_t>(parse_int(expect(in, "bins", 2)[1], "bins"));
  for (std::size_t j = 0; j < nbins; ++j) {
    const auto f = expect(in, "bin", 4);
    BinMapper m;
    m.has_missing = f[1] == "1";
    const auto nb = static_cast<std::size_t>(parse_int(f[2], "boundaries"));
    const auto nv = static_cast<std::size_t>(parse_int(f[3], "values"));
    if (f.size() != 4 + nb + nv) throw Error(ErrorCode::ParseError, "bin record length mismatch");
    for (std::size_t k = 0; k < nb; ++k) m.boundaries.push_back(parse_double(f[4 + k], "boundary"));
    for (std::size_t k = 0; k < nv; ++k) m.values.push_back(parse_double(f[4 + nb + k], "value"));
    model.bins.push_back(std::move(m));
  }
  const auto ntrees = static_cast<std::size_t>(parse_int(expect(in, "trees", 2)[1], "trees"));
  for (std::size_t b = 0; b < ntrees; ++b) {
    model.learning_rates.push_back(parse_double(expect(in, "rate", 2)[1], "rate"));
    model.trees.push_back(read_tree(in));
  }
  return model;
}

}  // namespace losscost
