#include "reflx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace reflx {

Graph::Graph(std::size_t node_count)
    : adjacency_(node_count), matrix_(node_count * node_count, 0) {}

Graph Graph::from_edges(std::size_t node_count, const std::vector<std::pair<int, int>>& edges) {
  Graph g(node_count);
  for (auto [u, v] : edges) {
    if (!g.add_edge(u, v)) {
      throw std::invalid_argument("duplicate edge " + std::to_string(u) + " " + std::to_string(v));
    }
  }
  return g;
}

bool Graph::add_edge(int u, int v) {
  const auto n = static_cast<int>(node_count());
  if (u < 0 || v < 0 || u >= n || v >= n) {
    throw std::invalid_argument("edge " + std::to_string(u) + " " + std::to_string(v) +
                                " out of range for " + std::to_string(n) + " nodes");
  }
  if (u == v) throw std::invalid_argument("self-loop at node " + std::to_string(u));
  if (has_edge(u, v)) return false;
  matrix_[static_cast<std::size_t>(u) * node_count() + static_cast<std::size_t>(v)] = 1;
  matrix_[static_cast<std::size_t>(v) * node_count() + static_cast<std::size_t>(u)] = 1;
  auto insert_sorted = [](std::vector<int>& list, int x) {
    list.insert(std::lower_bound(list.begin(), list.end(), x), x);
  };
  insert_sorted(adjacency_[static_cast<std::size_t>(u)], v);
  insert_sorted(adjacency_[static_cast<std::size_t>(v)], u);
  ++edge_count_;
  return true;
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(edge_count_);
  for (std::size_t u = 0; u < node_count(); ++u) {
    for (int v : adjacency_[u]) {
      if (static_cast<int>(u) < v) out.emplace_back(static_cast<int>(u), v);
    }
  }
  return out;
}

Graph Graph::complement() const {
  Graph c(node_count());
  const auto n = static_cast<int>(node_count());
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (!has_edge(u, v)) c.add_edge(u, v);
    }
  }
  return c;
}

ConstraintGraph build_sudoku_graph(int side) {
  if (side != 4 && side != 9) {
    throw std::invalid_argument("build_sudoku_graph: unsupported side " + std::to_string(side));
  }
  const int box = side == 4 ? 2 : 3;
  const int cells = side * side;
  Graph g(static_cast<std::size_t>(cells));
  for (int a = 0; a < cells; ++a) {
    for (int b = a + 1; b < cells; ++b) {
      const int ra = a / side, ca = a % side, rb = b / side, cb = b % side;
      const bool same_box = ra / box == rb / box && ca / box == cb / box;
      if (ra == rb || ca == cb || same_box) g.add_edge(a, b);
    }
  }
  return g;
}

}  // namespace reflx
