#pragma once

#include <cmath>

#include "losscost/cart.hpp"

namespace testing_support {

inline bool close(double a, double b, double rel) {
  return a == b || std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

// Structural equality: same shape, same splits, leaf values within rel.
inline bool same_tree(const losscost::Tree& a, const losscost::Tree& b, double rel, int na = 0, int nb = 0) {
  const auto& x = a.nodes[static_cast<std::size_t>(na)];
  const auto& y = b.nodes[static_cast<std::size_t>(nb)];
  if (x.is_leaf() != y.is_leaf()) return false;
  if (x.is_leaf()) return close(x.value, y.value, rel) && x.count == y.count;
  if (x.feature != y.feature || !close(x.threshold, y.threshold, rel) || x.missing_left != y.missing_left) {
    return false;
  }
  return same_tree(a, b, rel, x.left, y.left) && same_tree(a, b, rel, x.right, y.right);
}

}  // namespace testing_support
