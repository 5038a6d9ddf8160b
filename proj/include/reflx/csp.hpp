#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "reflx/assignment.hpp"
#include "reflx/graph.hpp"

namespace reflx {

// Finite-domain Sudoku solver: per-cell domain bitsets, pairwise all-different
// pruning to fixpoint (assigned values are removed from peers), then
// backtracking on the minimum-remaining-values cell.
class SudokuCsp {
 public:
  explicit SudokuCsp(int side);

  // Enumerates up to `limit` completions; the first one lands in `first`.
  std::size_t search(const Assignment& partial, std::size_t limit,
                     std::vector<int>* first = nullptr);

  std::uint64_t nodes() const { return nodes_; }

 private:
  using Domains = std::vector<std::uint32_t>;
  bool assign_and_prune(Domains& d, int cell, int digit) const;
  void recurse(Domains& d, std::size_t limit, std::vector<int>* first, std::size_t& found);

  int side_;
  ConstraintGraph graph_;
  std::uint64_t nodes_ = 0;
};

}  // namespace reflx
