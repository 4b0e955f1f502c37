#include "losscost/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "losscost/error.hpp"

namespace losscost {

Eigen::VectorXd mdi_columns(const GbdtModel& model) {
  Eigen::VectorXd gain = Eigen::VectorXd::Zero(model.n_columns);
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (!node.is_leaf()) gain(node.feature) += node.gain;
    }
  }
  return gain;
}

ImportanceVector mdi(const GbdtModel& model, const Encoding& encoding, bool normalize) {
  if (encoding.width() != model.n_columns) throw Error(ErrorCode::ColumnMismatch, "encoding does not match the model");
  const Eigen::VectorXd gain = mdi_columns(model);
  const auto owner = encoding.column_feature();
  ImportanceVector out;
  out.method = "mdi";
  for (const auto& f : encoding.features) out.scores.push_back({f.name, 0.0});
  for (Eigen::Index c = 0; c < gain.size(); ++c) out.scores[owner[static_cast<std::size_t>(c)]].score += gain(c);
  const double total = gain.sum();
  if (normalize && total > 0.0) {
    for (auto& s : out.scores) s.score /= total;
    out.normalized = true;
  }
  return out;
}

ImportanceVector mda(const FittedModel& model, const PortfolioTable& table, std::size_t n_repeats,
                     std::uint64_t seed) {
  if (n_repeats < 1) throw Error(ErrorCode::InvalidConfig, "n_repeats must be >= 1");
  const Eigen::MatrixXd x = model.design(table);
  const Eigen::VectorXd& y = table.response;
  auto mse = [&](const Eigen::MatrixXd& m) {
    Eigen::VectorXd pred = model.link_from_design(m);
    if (model.kind != RecipeKind::Gbdt || model.gbdt->objective == Objective::Tweedie) pred = pred.array().exp();
    return (pred - y).squaredNorm() / static_cast<double>(y.size());
  };
  const double baseline = mse(x);
  const auto n = static_cast<std::size_t>(x.rows());

  ImportanceVector out;
  out.method = "mda";
  Eigen::MatrixXd permuted = x;
  std::vector<Eigen::Index> perm(n);
  for (std::size_t f = 0; f < model.encoding.features.size(); ++f) {
    const auto cols = model.encoding.columns_of(f);
    std::seed_seq seq{seed, static_cast<std::uint64_t>(f)};
    std::mt19937_64 rng(seq);
    double total = 0.0;
    for (std::size_t r = 0; r < n_repeats; ++r) {
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
      }
      for (auto c : cols) {
        const auto col = static_cast<Eigen::Index>(c);
        for (std::size_t i = 0; i < n; ++i) permuted(static_cast<Eigen::Index>(i), col) = x(perm[i], col);
      }
      total += mse(permuted) - baseline;
      for (auto c : cols) permuted.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(c));
    }
    out.scores.push_back({model.encoding.features[f].name, total / static_cast<double>(n_repeats)});
  }
  return out;
}

double tree_expectation(const Tree& tree) {
  const double root = tree.nodes[0].cover;
  if (!(root > 0.0)) return tree.nodes[0].value;
  double s = 0.0;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) s += node.cover * node.value;
  }
  return s / root;
}

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(std::vector<PathElement>& path, int depth, double zero, double one, int feature) {
  auto d = static_cast<std::size_t>(depth);
  path[d] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    auto k = static_cast<std::size_t>(i);
    path[k + 1].pweight += one * path[k].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[k].pweight = zero * path[k].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(std::vector<PathElement>& path, int depth, int index) {
  const double one = path[static_cast<std::size_t>(index)].one_fraction;
  const double zero = path[static_cast<std::size_t>(index)].zero_fraction;
  double next_one = path[static_cast<std::size_t>(depth)].pweight;
  for (int i = depth - 1; i >= 0; --i) {
    auto k = static_cast<std::size_t>(i);
    if (one != 0.0) {
      const double tmp = path[k].pweight;
      path[k].pweight = next_one * (depth + 1) / ((i + 1) * one);
      next_one = tmp - path[k].pweight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[k].pweight = path[k].pweight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    auto k = static_cast<std::size_t>(i);
    path[k].feature = path[k + 1].feature;
    path[k].zero_fraction = path[k + 1].zero_fraction;
    path[k].one_fraction = path[k + 1].one_fraction;
  }
}

double unwound_sum(const std::vector<PathElement>& path, int depth, int index) {
  const double one = path[static_cast<std::size_t>(index)].one_fraction;
  const double zero = path[static_cast<std::size_t>(index)].zero_fraction;
  double next_one = path[static_cast<std::size_t>(depth)].pweight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    auto k = static_cast<std::size_t>(i);
    if (one != 0.0) {
      const double tmp = next_one * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next_one = path[k].pweight - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
    } else if (zero != 0.0) {
      total += path[k].pweight / zero / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

struct ShapWalker {
  const Tree& tree;
  const Eigen::Ref<const Eigen::RowVectorXd>& x;
  double scale;
  Eigen::Ref<Eigen::RowVectorXd> phi;

  void recurse(int node_id, std::vector<PathElement> path, int depth, double zero, double one, int feature) {
    if (path.size() < static_cast<std::size_t>(depth) + 2) path.resize(static_cast<std::size_t>(depth) + 2);
    extend_path(path, depth, zero, one, feature);
    const auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
    if (node.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const auto& el = path[static_cast<std::size_t>(i)];
        const double w = unwound_sum(path, depth, i);
        phi(el.feature) += scale * w * (el.one_fraction - el.zero_fraction) * node.value;
      }
      return;
    }
    const double v = x(node.feature);
    const bool left = std::isnan(v) ? node.missing_left : v <= node.threshold;
    const int hot = left ? node.left : node.right;
    const int cold = left ? node.right : node.left;
    const double cover = node.cover;
    auto frac = [&](int child) {
      if (!(cover > 0.0)) return 0.5;
      return tree.nodes[static_cast<std::size_t>(child)].cover / cover;
    };

    double incoming_zero = 1.0, incoming_one = 1.0;
    int k = 1;
    for (; k <= depth; ++k) {
      if (path[static_cast<std::size_t>(k)].feature == node.feature) break;
    }
    if (k <= depth) {
      incoming_zero = path[static_cast<std::size_t>(k)].zero_fraction;
      incoming_one = path[static_cast<std::size_t>(k)].one_fraction;
      unwind_path(path, depth, k);
      --depth;
    }
    recurse(hot, path, depth + 1, incoming_zero * frac(hot), incoming_one, node.feature);
    recurse(cold, path, depth + 1, incoming_zero * frac(cold), 0.0, node.feature);
  }
};

}  // namespace

void tree_shap_row(const Tree& tree, const Eigen::Ref<const Eigen::RowVectorXd>& x, double scale,
                   Eigen::Ref<Eigen::RowVectorXd> phi) {
  if (tree.nodes.empty() || tree.nodes[0].is_leaf()) return;
  ShapWalker walker{tree, x, scale, phi};
  walker.recurse(0, std::vector<PathElement>(static_cast<std::size_t>(tree.depth()) + 2), 0, 1.0, 1.0, -1);
}

ShapMatrix tree_shap(const GbdtModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.n_columns) throw Error(ErrorCode::ColumnMismatch, "matrix width does not match the model");
  ShapMatrix out;
  out.values = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  out.base_value = model.f0;
  for (std::size_t b = 0; b < model.trees.size(); ++b) {
    out.base_value += model.learning_rates[b] * tree_expectation(model.trees[b]);
  }
  Eigen::RowVectorXd row(x.cols()), phi(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    row = x.row(i);
    phi.setZero();
    for (std::size_t b = 0; b < model.trees.size(); ++b) tree_shap_row(model.trees[b], row, model.learning_rates[b], phi);
    out.values.row(i) = phi;
  }
  return out;
}

ShapMatrix aggregate_shap(const ShapMatrix& columns, const Encoding& encoding) {
  if (columns.values.cols() != encoding.width()) throw Error(ErrorCode::ColumnMismatch, "encoding does not match");
  ShapMatrix out;
  out.base_value = columns.base_value;
  out.values = Eigen::MatrixXd::Zero(columns.values.rows(), static_cast<Eigen::Index>(encoding.features.size()));
  const auto owner = encoding.column_feature();
  for (Eigen::Index c = 0; c < columns.values.cols(); ++c) {
    out.values.col(static_cast<Eigen::Index>(owner[static_cast<std::size_t>(c)])) += columns.values.col(c);
  }
  for (const auto& f : encoding.features) out.names.push_back(f.name);
  return out;
}

AleCurve ale_numeric(const LinkFunction& f, const Eigen::MatrixXd& x, const Eigen::VectorXd& exposure,
                     Eigen::Index column, std::size_t n_bins, const std::vector<Eigen::Index>& rows) {
  if (n_bins < 2) throw Error(ErrorCode::InvalidConfig, "ALE needs n_bins >= 2");
  std::vector<double> values;
  for (auto r : rows) values.push_back(x(r, column));
  std::sort(values.begin(), values.end());
  AleCurve curve;
  if (!values.empty()) {
    const double last = static_cast<double>(values.size() - 1);
    for (std::size_t k = 0; k <= n_bins; ++k) {
      const auto pos = static_cast<std::size_t>(std::llround(last * static_cast<double>(k) / static_cast<double>(n_bins)));
      const double e = values[pos];
      if (curve.edges.empty() || e > curve.edges.back()) curve.edges.push_back(e);
    }
  }
  if (curve.edges.size() < 2) throw Error(ErrorCode::ConstantFeature, "feature has fewer than two distinct values");
  const std::size_t bins = curve.edges.size() - 1;

  auto bin_of = [&](double v) {
    const auto pos = std::lower_bound(curve.edges.begin(), curve.edges.end(), v) - curve.edges.begin();
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(pos - 1, 0, static_cast<std::ptrdiff_t>(bins) - 1));
  };

  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd lo(m, x.cols()), hi(m, x.cols());
  std::vector<std::size_t> which(rows.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    lo.row(i) = x.row(r);
    hi.row(i) = x.row(r);
    const auto b = bin_of(x(r, column));
    which[static_cast<std::size_t>(i)] = b;
    lo(i, column) = curve.edges[b];
    hi(i, column) = curve.edges[b + 1];
  }
  const Eigen::VectorXd diff = f(hi) - f(lo);
  std::vector<double> sum(bins, 0.0);
  curve.bin_rows.assign(bins, 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    sum[which[static_cast<std::size_t>(i)]] += diff(i);
    ++curve.bin_rows[which[static_cast<std::size_t>(i)]];
  }
  curve.effect.assign(bins + 1, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    const double local = curve.bin_rows[b] > 0 ? sum[b] / static_cast<double>(curve.bin_rows[b]) : 0.0;
    curve.effect[b + 1] = curve.effect[b] + local;
  }

  double wsum = 0.0, acc = 0.0;
  for (auto r : rows) {
    wsum += exposure(r);
    acc += exposure(r) * ale_value(curve, x(r, column));
  }
  curve.centering = wsum > 0.0 ? acc / wsum : 0.0;
  for (auto& e : curve.effect) e -= curve.centering;
  return curve;
}

double ale_value(const AleCurve& curve, double x) {
  const auto& e = curve.edges;
  if (x <= e.front()) return curve.effect.front();
  if (x >= e.back()) return curve.effect.back();
  const auto pos = static_cast<std::size_t>(std::lower_bound(e.begin(), e.end(), x) - e.begin());
  const std::size_t b = pos - 1;
  const double t = (x - e[b]) / (e[b + 1] - e[b]);
  return curve.effect[b] + t * (curve.effect[b + 1] - curve.effect[b]);
}

AleCurve ale(const FittedModel& model, const PortfolioTable& table, const std::string& feature, std::size_t n_bins) {
  std::size_t f = model.encoding.features.size();
  for (std::size_t k = 0; k < model.encoding.features.size(); ++k) {
    if (model.encoding.features[k].name == feature) f = k;
  }
  if (f == model.encoding.features.size()) throw Error(ErrorCode::MissingColumn, "model has no feature " + feature);
  const auto t = table.feature_index(feature);
  if (!t) throw Error(ErrorCode::MissingColumn, "table has no feature " + feature);
  const Eigen::VectorXd& raw = table.columns[*t];
  const Eigen::MatrixXd x = model.design(table);
  const LinkFunction link = [&](const Eigen::MatrixXd& m) { return model.link_from_design(m); };

  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!std::isnan(raw(i))) rows.push_back(i);
  }
  const auto& spec = model.encoding.features[f];
  const auto cols = model.encoding.columns_of(f);

  if (spec.kind != FeatureKind::Categorical) {
    Eigen::Index value_col = -1;
    for (auto c : cols) {
      if (model.encoding.columns[c].role == ColumnRole::Value) value_col = static_cast<Eigen::Index>(c);
    }
    AleCurve curve = ale_numeric(link, x, table.exposure, value_col, n_bins, rows);
    curve.feature = feature;
    return curve;
  }

  // Categories in descending frequency; accumulate effects between neighbours.
  const std::size_t k_cats = spec.categories.size();
  std::vector<std::size_t> freq(k_cats, 0);
  for (auto r : rows) ++freq[static_cast<std::size_t>(raw(r))];
  std::vector<std::size_t> order(k_cats);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
  while (!order.empty() && freq[order.back()] == 0) order.pop_back();
  if (order.size() < 2) throw Error(ErrorCode::ConstantFeature, "feature has fewer than two observed categories");

  std::vector<Eigen::Index> onehot(k_cats, -1);
  for (auto c : cols) {
    const auto& ec = model.encoding.columns[c];
    if (ec.role == ColumnRole::OneHot) onehot[static_cast<std::size_t>(ec.category)] = static_cast<Eigen::Index>(c);
  }
  auto set_category = [&](Eigen::MatrixXd& m, Eigen::Index i, std::size_t cat) {
    for (auto c : onehot) {
      if (c >= 0) m(i, c) = 0.0;
    }
    if (onehot[cat] >= 0) m(i, onehot[cat]) = 1.0;
  };

  AleCurve curve;
  curve.feature = feature;
  curve.categorical = true;
  curve.effect.assign(order.size(), 0.0);
  curve.bin_rows.assign(order.size(), 0);
  std::vector<std::size_t> position(k_cats, 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    position[order[k]] = k;
    curve.edges.push_back(static_cast<double>(order[k]));
    curve.labels.push_back(spec.categories[order[k]]);
    curve.bin_rows[k] = freq[order[k]];
  }
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    std::vector<Eigen::Index> members;
    for (auto r : rows) {
      const auto c = static_cast<std::size_t>(raw(r));
      if (c == order[k] || c == order[k + 1]) members.push_back(r);
    }
    const auto m = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd lo(m, x.cols()), hi(m, x.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
      lo.row(i) = x.row(members[static_cast<std::size_t>(i)]);
      hi.row(i) = lo.row(i);
      set_category(lo, i, order[k]);
      set_category(hi, i, order[k + 1]);
    }
    const double local = (link(hi) - link(lo)).mean();
    curve.effect[k + 1] = curve.effect[k] + local;
  }
  double wsum = 0.0, acc = 0.0;
  for (auto r : rows) {
    wsum += table.exposure(r);
    acc += table.exposure(r) * curve.effect[position[static_cast<std::size_t>(raw(r))]];
  }
  curve.centering = acc / wsum;
  for (auto& e : curve.effect) e -= curve.centering;
  return curve;
}

}  // namespace losscost
