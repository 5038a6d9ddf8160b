#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace reflx {

// Simple undirected graph: no self-loops, no parallel edges, sorted adjacency.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t node_count);

  // Throws std::invalid_argument on out-of-range endpoints, self-loops or duplicates.
  static Graph from_edges(std::size_t node_count,
                          const std::vector<std::pair<int, int>>& edges);

  // Returns false if the edge already exists. Throws on self-loops / range.
  bool add_edge(int u, int v);

  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  const std::vector<int>& neighbors(int v) const { return adjacency_[static_cast<std::size_t>(v)]; }
  std::size_t degree(int v) const { return neighbors(v).size(); }
  bool has_edge(int u, int v) const {
    return matrix_[static_cast<std::size_t>(u) * node_count() + static_cast<std::size_t>(v)] != 0;
  }

  std::vector<std::pair<int, int>> edges() const;  // u < v, lexicographic
  Graph complement() const;

  bool operator==(const Graph& other) const {
    return adjacency_ == other.adjacency_;
  }

 private:
  std::vector<std::vector<int>> adjacency_;
  std::vector<std::uint8_t> matrix_;
  std::size_t edge_count_ = 0;
};

// The graph message passing runs over. For Sudoku, the constraint graph.
using ConstraintGraph = Graph;

// Cells of a side x side board; u ~ v iff they share a row, column or box.
// Supported sides: 4 and 9.
ConstraintGraph build_sudoku_graph(int side);

}  // namespace reflx
