#include "losscost/cart.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "losscost/error.hpp"
#include "losscost/io.hpp"
#include "losscost/config.hpp"

namespace losscost {

std::size_t Tree::leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  // Children always have larger indices than their parent.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

int Tree::max_feature() const {
  int m = -1;
  for (const auto& n : nodes) m = std::max(m, n.feature);
  return m;
}

void TreeConfig::validate() const {
  if (max_depth < 1) throw Error(ErrorCode::InvalidConfig, "max_depth must be >= 1");
  if (min_child_samples < 1) throw Error(ErrorCode::InvalidConfig, "min_child_samples must be >= 1");
  if (max_bins < 2) throw Error(ErrorCode::InvalidConfig, "max_bins must be >= 2");
}

namespace {

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m < b ? m : a;
}

struct Entry {
  double x;
  double w;
  double u;
};

}  // namespace

std::optional<SplitCandidate> best_split(std::span<const Eigen::Index> rows, const Eigen::MatrixXd& x,
                                         const Eigen::VectorXd& targets, const Eigen::VectorXd& weights,
                                         const TreeConfig& config) {
  const std::size_t n = rows.size();
  if (n < 2 * config.min_child_samples) return std::nullopt;

  double sw = 0.0, swt = 0.0;
  for (auto r : rows) {
    sw += weights(r);
    swt += weights(r) * targets(r);
  }
  if (!(sw > 0.0)) return std::nullopt;
  const double mean = swt / sw;

  double sse = 0.0, s_total = 0.0;
  for (auto r : rows) {
    const double u = targets(r) - mean;
    sse += weights(r) * u * u;
    s_total += weights(r) * u;
  }
  if (!(sse > 0.0)) return std::nullopt;
  const double base = s_total * s_total / sw;

  SplitCandidate best;
  bool found = false;
  std::vector<Entry> entries;
  entries.reserve(n);

  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    entries.clear();
    double w_miss = 0.0, s_miss = 0.0;
    std::size_t n_miss = 0;
    for (auto r : rows) {
      const double v = x(r, j);
      const double u = targets(r) - mean;
      if (std::isnan(v)) {
        w_miss += weights(r);
        s_miss += weights(r) * u;
        ++n_miss;
      } else {
        entries.push_back({v, weights(r), u});
      }
    }
    if (entries.size() < 2) continue;
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.x < b.x; });

    double w_nm = 0.0, s_nm = 0.0;
    for (const auto& e : entries) {
      w_nm += e.w;
      s_nm += e.w * e.u;
    }

    double wl = 0.0, sl = 0.0;
    for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
      wl += entries[i].w;
      sl += entries[i].w * entries[i].u;
      if (!(entries[i].x < entries[i + 1].x)) continue;
      const double wr = w_nm - wl;
      const double sr = s_nm - sl;
      const bool miss_left = wl >= wr;
      const std::size_t nl = i + 1 + (miss_left ? n_miss : 0);
      const std::size_t nr = entries.size() - i - 1 + (miss_left ? 0 : n_miss);
      if (nl < config.min_child_samples || nr < config.min_child_samples) continue;
      const double WL = wl + (miss_left ? w_miss : 0.0);
      const double SL = sl + (miss_left ? s_miss : 0.0);
      const double WR = wr + (miss_left ? 0.0 : w_miss);
      const double SR = sr + (miss_left ? 0.0 : s_miss);
      if (!(WL > 0.0) || !(WR > 0.0)) continue;
      const double gain = SL * SL / WL + SR * SR / WR - base;
      // Gains within rounding of each other count as ties, which the earlier candidate wins.
      if (!found || gain > best.gain + 1e-12 * sse) {
        found = true;
        best = {static_cast<int>(j), midpoint(entries[i].x, entries[i + 1].x), gain, miss_left};
      }
    }
  }
  if (!found || best.gain <= 1e-12 * sse) return std::nullopt;
  return best;
}

namespace {

struct Grower {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& t;
  const Eigen::VectorXd& w;
  const TreeConfig& config;
  Tree tree;

  int build(std::vector<Eigen::Index> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sw = 0.0, swt = 0.0;
    for (auto r : rows) {
      sw += w(r);
      swt += w(r) * t(r);
    }
    {
      auto& node = tree.nodes.back();
      node.cover = sw;
      node.count = rows.size();
      node.value = sw > 0.0 ? swt / sw : 0.0;
    }
    if (depth >= config.max_depth) return id;
    const auto split = best_split(rows, x, t, w, config);
    if (!split) return id;

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) {
      const double v = x(r, split->feature);
      const bool go_left = std::isnan(v) ? split->missing_left : v <= split->threshold;
      (go_left ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    {
      auto& node = tree.nodes[static_cast<std::size_t>(id)];
      node.feature = split->feature;
      node.threshold = split->threshold;
      node.missing_left = split->missing_left;
      node.gain = split->gain;
    }
    const int l = build(std::move(left), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    const int r = build(std::move(right), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

}  // namespace

Tree grow(const Eigen::MatrixXd& x, const Eigen::VectorXd& targets, const Eigen::VectorXd& weights,
          const TreeConfig& config) {
  config.validate();
  if (targets.size() != x.rows() || weights.size() != x.rows()) {
    throw Error(ErrorCode::ColumnMismatch, "targets and weights must match the row count");
  }
  if (x.rows() == 0) throw Error(ErrorCode::InvalidConfig, "cannot grow a tree on zero rows");
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  Grower g{x, targets, weights, config, {}};
  g.build(std::move(rows), 0);
  return std::move(g.tree);
}

Eigen::VectorXd predict_tree(const Tree& tree, const Eigen::MatrixXd& x) {
  if (tree.max_feature() >= x.cols()) throw Error(ErrorCode::ColumnMismatch, "tree uses more columns than given");
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = tree.predict_row(x.row(i));
  return out;
}

void assign_cover(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& weights) {
  for (auto& n : tree.nodes) {
    n.cover = 0.0;
    n.count = 0;
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int at = 0;
    while (true) {
      auto& n = tree.nodes[static_cast<std::size_t>(at)];
      n.cover += weights(i);
      ++n.count;
      if (n.is_leaf()) break;
      const double v = x(i, n.feature);
      at = (std::isnan(v) ? n.missing_left : v <= n.threshold) ? n.left : n.right;
    }
  }
}

namespace {

void write_node(std::ostream& out, const Tree& tree, int id) {
  const auto& n = tree.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) {
    out << "L\t" << format_exact(n.value) << '\t' << format_exact(n.cover) << '\t' << n.count << '\n';
    return;
  }
  out << "S\t" << n.feature << '\t' << format_exact(n.threshold) << '\t' << (n.missing_left ? 1 : 0) << '\t'
      << format_exact(n.gain) << '\t' << format_exact(n.value) << '\t' << format_exact(n.cover) << '\t' << n.count
      << '\n';
  write_node(out, tree, n.left);
  write_node(out, tree, n.right);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, '\t')) out.push_back(cell);
  return out;
}

int read_node(std::istream& in, Tree& tree) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "tree record truncated");
  const auto f = split_tabs(line);
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  TreeNode n;
  if (f.size() == 4 && f[0] == "L") {
    n.value = parse_double(f[1], "tree");
    n.cover = parse_double(f[2], "tree");
    n.count = static_cast<std::size_t>(parse_int(f[3], "tree"));
    tree.nodes[static_cast<std::size_t>(id)] = n;
    return id;
  }
  if (f.size() != 8 || f[0] != "S") throw Error(ErrorCode::ParseError, "bad tree record: " + line);
  n.feature = static_cast<int>(parse_int(f[1], "tree"));
  n.threshold = parse_double(f[2], "tree");
  n.missing_left = f[3] == "1";
  n.gain = parse_double(f[4], "tree");
  n.value = parse_double(f[5], "tree");
  n.cover = parse_double(f[6], "tree");
  n.count = static_cast<std::size_t>(parse_int(f[7], "tree"));
  n.left = read_node(in, tree);
  n.right = read_node(in, tree);
  tree.nodes[static_cast<std::size_t>(id)] = n;
  return id;
}

}  // namespace

void write_tree(std::ostream& out, const Tree& tree) {
  out << "tree\t" << tree.nodes.size() << '\n';
  if (!tree.nodes.empty()) write_node(out, tree, 0);
}

Tree read_tree(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "missing tree header");
  const auto head = split_tabs(line);
  if (head.size() != 2 || head[0] != "tree") throw Error(ErrorCode::ParseError, "bad tree header: " + line);
  const auto size = static_cast<std::size_t>(parse_int(head[1], "tree"));
  Tree tree;
  if (size > 0) read_node(in, tree);
  if (tree.nodes.size() != size) throw Error(ErrorCode::ParseError, "tree node count mismatch");
  return tree;
}

}  // namespace losscost
