#pragma once

#include <random>

#include "losscost/cart.hpp"

namespace testing_support {

inline void grow_random(std::mt19937_64& rng, losscost::Tree& t, int features, int max_nodes) {
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> f(0, features - 1);
  int budget = max_nodes;
  auto build = [&](auto&& self, int depth) -> int {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    --budget;
    if (budget >= 2 && depth < 3 && u(rng) < 0.75) {
      t.nodes[static_cast<std::size_t>(id)].feature = f(rng);
      t.nodes[static_cast<std::size_t>(id)].threshold = u(rng);
      t.nodes[static_cast<std::size_t>(id)].missing_left = u(rng) < 0.5;
      const int l = self(self, depth + 1);
      t.nodes[static_cast<std::size_t>(id)].left = l;
      const int r = self(self, depth + 1);
      t.nodes[static_cast<std::size_t>(id)].right = r;
      auto& n = t.nodes[static_cast<std::size_t>(id)];
      n.cover = t.nodes[static_cast<std::size_t>(l)].cover + t.nodes[static_cast<std::size_t>(r)].cover;
      n.gain = 1.0;
    } else {
      auto& n = t.nodes[static_cast<std::size_t>(id)];
      n.value = u(rng) * 4 - 2;
      n.cover = 0.1 + u(rng) * 10;
      n.count = 1;
    }
    return id;
  };
  build(build, 0);
}

// Random tree on `features` columns with at most `max_nodes` nodes; covers are
// positive at the leaves and summed upwards.
inline losscost::Tree random_tree(std::mt19937_64& rng, int features, int max_nodes) {
  losscost::Tree t;
  do {
    t.nodes.clear();
    grow_random(rng, t, features, max_nodes);
  } while (static_cast<int>(t.nodes.size()) > max_nodes);
  return t;
}


}  // namespace testing_support
