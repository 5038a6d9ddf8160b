#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace reflx {

inline constexpr int kBlank = -1;

// A partial or complete symbolic output over n positions. Sudoku positions hold
// digits 1..side; graph-task positions hold 1 (node selected) or 0 (not
// selected). `clue` marks positions fixed by the input.
struct Assignment {
  std::vector<int> values;
  std::vector<std::uint8_t> clue;

  Assignment() = default;
  explicit Assignment(std::size_t n) : values(n, kBlank), clue(n, 0) {}
  Assignment(std::vector<int> v, std::vector<std::uint8_t> c)
      : values(std::move(v)), clue(std::move(c)) {}

  std::size_t size() const { return values.size(); }
  bool blank(std::size_t i) const { return values[i] == kBlank; }
  bool is_clue(std::size_t i) const { return !clue.empty() && clue[i] != 0; }

  std::size_t blank_count() const {
    std::size_t n = 0;
    for (int v : values) n += v == kBlank ? 1 : 0;
    return n;
  }
  std::size_t clue_count() const {
    std::size_t n = 0;
    for (auto c : clue) n += c != 0 ? 1 : 0;
    return n;
  }

  // Only the clue positions, everything else blank.
  Assignment clues_only() const {
    Assignment out(size());
    out.clue = clue;
    for (std::size_t i = 0; i < size(); ++i) {
      if (is_clue(i)) out.values[i] = values[i];
    }
    return out;
  }

  bool operator==(const Assignment& other) const { return values == other.values; }
};

// Per-position binary flags; 1 marks a suspected error.
using ReflectionVector = std::vector<std::uint8_t>;

}  // namespace reflx
