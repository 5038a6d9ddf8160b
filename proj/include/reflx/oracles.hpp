#pragma once

// Brute-force reference answers. Nothing here shares constraint code with the
// knowledge module, so agreement between the two is a real check.

#include <array>
#include <vector>

#include "reflx/assignment.hpp"
#include "reflx/graph.hpp"

namespace reflx::oracle {

// Bron-Kerbosch with Tomita pivoting; throws for graphs above 40 nodes.
std::vector<int> max_clique(const Graph& g);
// Maximum clique of the complement graph.
std::vector<int> max_independent_set(const Graph& g);
// Every subset, largest first; throws above 16 nodes.
std::vector<int> max_clique_exhaustive(const Graph& g);
std::vector<int> max_independent_set_exhaustive(const Graph& g);

using Grid4 = std::array<int, 16>;

// Direct rule check of a complete board of digits (rows, columns, boxes).
bool sudoku_rules_hold(const std::vector<int>& digits, int side);

// All valid 4x4 grids (rows enumerated as permutations, then checked).
const std::vector<Grid4>& all_4x4_grids();

// Every complete 4x4 grid agreeing with the assigned cells of `partial`.
std::vector<Grid4> solve_sudoku_exhaustive(const Assignment& partial);

}  // namespace reflx::oracle
