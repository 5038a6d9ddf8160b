#include "reflx/csp.hpp"

#include <bit>
#include <stdexcept>
#include <string>

namespace reflx {

SudokuCsp::SudokuCsp(int side) : side_(side), graph_(build_sudoku_graph(side)) {}

// Fixes `cell` to `digit` and removes each newly fixed value from its peers
// until nothing changes. Returns false on a domain wipeout.
bool SudokuCsp::assign_and_prune(Domains& d, int cell, int digit) const {
  const std::uint32_t bit = 1u << (digit - 1);
  if ((d[static_cast<std::size_t>(cell)] & bit) == 0) return false;
  d[static_cast<std::size_t>(cell)] = bit;
  std::vector<int> queue{cell};
  while (!queue.empty()) {
    const int c = queue.back();
    queue.pop_back();
    const std::uint32_t fixed = d[static_cast<std::size_t>(c)];
    for (int peer : graph_.neighbors(c)) {
      auto& dp = d[static_cast<std::size_t>(peer)];
      if ((dp & fixed) == 0) continue;
      dp &= ~fixed;
      if (dp == 0) return false;
      if (std::has_single_bit(dp)) queue.push_back(peer);
    }
  }
  return true;
}

void SudokuCsp::recurse(Domains& d, std::size_t limit, std::vector<int>* first,
                        std::size_t& found) {
  ++nodes_;
  int best = -1;
  int best_size = side_ + 1;
  for (std::size_t c = 0; c < d.size(); ++c) {
    const int size = std::popcount(d[c]);
    if (size > 1 && size < best_size) {
      best = static_cast<int>(c);
      best_size = size;
    }
  }
  if (best < 0) {
    if (found == 0 && first != nullptr) {
      first->resize(d.size());
      for (std::size_t c = 0; c < d.size(); ++c) (*first)[c] = std::countr_zero(d[c]) + 1;
    }
    ++found;
    return;
  }
  const std::uint32_t domain = d[static_cast<std::size_t>(best)];
  for (int digit = 1; digit <= side_ && found < limit; ++digit) {
    if ((domain & (1u << (digit - 1))) == 0) continue;
    Domains next = d;
    if (assign_and_prune(next, best, digit)) recurse(next, limit, first, found);
  }
}

std::size_t SudokuCsp::search(const Assignment& partial, std::size_t limit,
                              std::vector<int>* first) {
  const auto cells = static_cast<std::size_t>(side_ * side_);
  if (partial.size() != cells) {
    throw std::invalid_argument("SudokuCsp: expected " + std::to_string(cells) + " cells, got " +
                                std::to_string(partial.size()));
  }
  Domains d(cells, (1u << side_) - 1);
  // Seed every fixed cell before pruning so early wipeouts are detected.
  for (std::size_t c = 0; c < cells; ++c) {
    const int v = partial.values[c];
    if (v == kBlank) continue;
    if (v < 1 || v > side_) throw std::invalid_argument("SudokuCsp: digit out of range");
  }
  for (std::size_t c = 0; c < cells; ++c) {
    const int v = partial.values[c];
    if (v == kBlank) continue;
    if (!assign_and_prune(d, static_cast<int>(c), v)) return 0;
  }
  std::size_t found = 0;
  if (limit > 0) recurse(d, limit, first, found);
  return found;
}

}  // namespace reflx
