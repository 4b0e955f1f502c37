#pragma once

// Slow, independent reference implementations used as test oracles. None of
// these call into the library code they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "losscost/cart.hpp"

namespace oracle {

// Gini from its definition: sort by prediction (stable), then
// 1 - 2/(N-1) * (N - sum_i i * y_(i) / sum y).
inline double gini(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  const auto n = static_cast<std::size_t>(pred.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pred(a) < pred(b); });
  long double weighted = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    weighted += static_cast<long double>(i + 1) * obs(idx[i]);
    total += obs(idx[i]);
  }
  const long double N = n;
  return static_cast<double>(1.0L - 2.0L / (N - 1.0L) * (N - weighted / total));
}

inline double pe(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  long double a = 0, b = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    a += pred(i);
    b += obs(i);
  }
  return static_cast<double>((a - b) / b);
}

inline double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  long double s = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) s += (long double)(pred(i) - obs(i)) * (pred(i) - obs(i));
  return static_cast<double>(std::sqrt(s / pred.size()));
}

inline double mae(const Eigen::VectorXd& pred, const Eigen::VectorXd& obs) {
  long double s = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) s += std::fabs(pred(i) - obs(i));
  return static_cast<double>(s / pred.size());
}

// Brute-force regression tree: at every node try every (column, midpoint)
// pair, score it by the drop in weighted SSE computed directly from the rows.
struct BruteCart {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const Eigen::VectorXd& w;
  int max_depth;
  std::size_t min_child;
  losscost::Tree tree;

  static double sse(const std::vector<Eigen::Index>& rows, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    double sw = 0, swy = 0;
    for (auto r : rows) {
      sw += w(r);
      swy += w(r) * y(r);
    }
    const double m = swy / sw;
    double s = 0;
    for (auto r : rows) s += w(r) * (y(r) - m) * (y(r) - m);
    return s;
  }

  int build(const std::vector<Eigen::Index>& rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sw = 0, swy = 0;
    for (auto r : rows) {
      sw += w(r);
      swy += w(r) * y(r);
    }
    tree.nodes.back().value = swy / sw;
    tree.nodes.back().cover = sw;
    tree.nodes.back().count = rows.size();
    if (depth >= max_depth) return id;

    const double parent = sse(rows, y, w);
    bool found = false;
    double best_gain = 0, best_s = 0;
    int best_j = -1;
    bool best_ml = true;
    std::vector<Eigen::Index> best_l, best_r;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::vector<double> vals;
      for (auto r : rows)
        if (!std::isnan(x(r, j))) vals.push_back(x(r, j));
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
        const double s = (vals[k] + vals[k + 1]) / 2;
        double wl = 0, wr = 0;
        for (auto r : rows) {
          if (std::isnan(x(r, j))) continue;
          (x(r, j) <= s ? wl : wr) += w(r);
        }
        const bool ml = wl >= wr;
        std::vector<Eigen::Index> l, rr;
        for (auto r : rows) {
          const bool left = std::isnan(x(r, j)) ? ml : x(r, j) <= s;
          (left ? l : rr).push_back(r);
        }
        if (l.size() < min_child || rr.size() < min_child) continue;
        const double gain = parent - sse(l, y, w) - sse(rr, y, w);
        if (!found || gain > best_gain * (1 + 1e-12) + 1e-300) {
          found = true;
          best_gain = gain;
          best_j = static_cast<int>(j);
          best_s = s;
          best_ml = ml;
          best_l = l;
          best_r = rr;
        }
      }
    }
    if (!found || best_gain <= 1e-12 * parent) return id;
    tree.nodes[static_cast<std::size_t>(id)].feature = best_j;
    tree.nodes[static_cast<std::size_t>(id)].threshold = best_s;
    tree.nodes[static_cast<std::size_t>(id)].missing_left = best_ml;
    tree.nodes[static_cast<std::size_t>(id)].gain = best_gain;
    const int l = build(best_l, depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    const int r = build(best_r, depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

inline losscost::Tree brute_cart(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                 int max_depth, std::size_t min_child) {
  BruteCart b{x, y, w, max_depth, min_child, {}};
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  b.build(rows, 0);
  return b.tree;
}

// Path-dependent value function: features in S follow x, the others average
// their children by cover.
inline double cond_expectation(const losscost::Tree& t, const Eigen::RowVectorXd& x, unsigned mask, int node = 0) {
  const auto& n = t.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return n.value;
  if (mask & (1u << n.feature)) {
    const double v = x(n.feature);
    const bool left = std::isnan(v) ? n.missing_left : v <= n.threshold;
    return cond_expectation(t, x, mask, left ? n.left : n.right);
  }
  const auto& l = t.nodes[static_cast<std::size_t>(n.left)];
  const auto& r = t.nodes[static_cast<std::size_t>(n.right)];
  return (l.cover * cond_expectation(t, x, mask, n.left) + r.cover * cond_expectation(t, x, mask, n.right)) /
         (l.cover + r.cover);
}

// Shapley values by enumerating every coalition of the first m features.
inline Eigen::RowVectorXd shapley(const losscost::Tree& t, const Eigen::RowVectorXd& x, int m) {
  Eigen::RowVectorXd phi = Eigen::RowVectorXd::Zero(x.size());
  std::vector<double> fact(static_cast<std::size_t>(m) + 1, 1.0);
  for (int k = 1; k <= m; ++k) fact[static_cast<std::size_t>(k)] = fact[static_cast<std::size_t>(k) - 1] * k;
  for (int i = 0; i < m; ++i) {
    for (unsigned s = 0; s < (1u << m); ++s) {
      if (s & (1u << i)) continue;
      const int size = __builtin_popcount(s);
      const double weight = fact[static_cast<std::size_t>(size)] * fact[static_cast<std::size_t>(m - size - 1)] /
                            fact[static_cast<std::size_t>(m)];
      phi(i) += weight * (cond_expectation(t, x, s | (1u << i)) - cond_expectation(t, x, s));
    }
  }
  return phi;
}

// Dense Newton on the ridge-penalized, weight-normalized Tweedie objective in
// (intercept, beta); Hessian assembled explicitly and solved with LDLT.
inline Eigen::VectorXd ridge_newton(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                    double p, double lambda) {
  const Eigen::Index n = z.rows(), k = z.cols();
  Eigen::MatrixXd a(n, k + 1);
  a.col(0).setOnes();
  a.rightCols(k) = z;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k + 1);
  theta(0) = std::log((w.array() * y.array()).sum() / w.sum());
  const double W = w.sum();
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd eta = a * theta;
    Eigen::VectorXd g(n), h(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e1 = std::exp(-(p - 1) * eta(i)), e2 = std::exp((2 - p) * eta(i));
      g(i) = w(i) * (-y(i) * e1 + e2) / W;
      h(i) = w(i) * ((p - 1) * y(i) * e1 + (2 - p) * e2) / W;
    }
    Eigen::VectorXd grad = a.transpose() * g;
    Eigen::MatrixXd hess = a.transpose() * h.asDiagonal() * a;
    grad.tail(k) += lambda * theta.tail(k);
    hess.bottomRightCorner(k, k).diagonal().array() += lambda;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    theta -= step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-13) break;
  }
  return theta;
}

}  // namespace oracle
