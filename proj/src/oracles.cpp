#include "reflx/oracles.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace reflx::oracle {

namespace {

using Mask = std::uint64_t;

std::vector<Mask> neighbor_masks(const Graph& g) {
  std::vector<Mask> m(g.node_count(), 0);
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    for (int u : g.neighbors(static_cast<int>(v))) m[v] |= Mask{1} << u;
  }
  return m;
}

void bron_kerbosch(const std::vector<Mask>& adj, Mask r, Mask p, Mask x, Mask& best) {
  if (p == 0 && x == 0) {
    if (std::popcount(r) > std::popcount(best)) best = r;
    return;
  }
  if (std::popcount(r) + std::popcount(p) <= std::popcount(best)) return;
  // pivot maximising |P & N(u)| over P | X
  int pivot = -1;
  int pivot_hits = -1;
  for (Mask px = p | x; px != 0; px &= px - 1) {
    const int u = std::countr_zero(px);
    const int hits = std::popcount(p & adj[static_cast<std::size_t>(u)]);
    if (hits > pivot_hits) {
      pivot = u;
      pivot_hits = hits;
    }
  }
  for (Mask cand = p & ~adj[static_cast<std::size_t>(pivot)]; cand != 0; cand &= cand - 1) {
    const int v = std::countr_zero(cand);
    const Mask bit = Mask{1} << v;
    bron_kerbosch(adj, r | bit, p & adj[static_cast<std::size_t>(v)],
                  x & adj[static_cast<std::size_t>(v)], best);
    p &= ~bit;
    x |= bit;
  }
}

std::vector<int> to_list(Mask m) {
  std::vector<int> out;
  for (; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
  return out;
}

}  // namespace

std::vector<int> max_clique(const Graph& g) {
  if (g.node_count() > 40) {
    throw std::invalid_argument("oracle::max_clique: " + std::to_string(g.node_count()) +
                                " nodes exceeds the 40-node guard");
  }
  if (g.node_count() == 0) return {};
  const auto adj = neighbor_masks(g);
  const Mask all = g.node_count() == 64 ? ~Mask{0} : (Mask{1} << g.node_count()) - 1;
  Mask best = 0;
  bron_kerbosch(adj, 0, all, 0, best);
  return to_list(best);
}

std::vector<int> max_independent_set(const Graph& g) { return max_clique(g.complement()); }

std::vector<int> max_clique_exhaustive(const Graph& g) {
  const std::size_t n = g.node_count();
  if (n > 16) {
    throw std::invalid_argument("oracle::max_clique_exhaustive: " + std::to_string(n) +
                                " nodes exceeds the 16-node guard");
  }
  Mask best = 0;
  for (Mask s = 0; s < (Mask{1} << n); ++s) {
    if (std::popcount(s) <= std::popcount(best)) continue;
    bool clique = true;
    for (Mask a = s; a != 0 && clique; a &= a - 1) {
      const int u = std::countr_zero(a);
      for (Mask b = a & (a - 1); b != 0; b &= b - 1) {
        if (!g.has_edge(u, std::countr_zero(b))) {
          clique = false;
          break;
        }
      }
    }
    if (clique) best = s;
  }
  return to_list(best);
}

std::vector<int> max_independent_set_exhaustive(const Graph& g) {
  return max_clique_exhaustive(g.complement());
}

bool sudoku_rules_hold(const std::vector<int>& digits, int side) {
  const int box = side == 4 ? 2 : 3;
  if (static_cast<int>(digits.size()) != side * side) return false;
  for (int d : digits) {
    if (d < 1 || d > side) return false;
  }
  auto at = [&](int r, int c) { return digits[static_cast<std::size_t>(r * side + c)]; };
  for (int i = 0; i < side; ++i) {
    for (int a = 0; a < side; ++a) {
      for (int b = a + 1; b < side; ++b) {
        if (at(i, a) == at(i, b)) return false;  // row i
        if (at(a, i) == at(b, i)) return false;  // column i
      }
    }
  }
  for (int br = 0; br < side; br += box) {
    for (int bc = 0; bc < side; bc += box) {
      for (int a = 0; a < side; ++a) {
        for (int b = a + 1; b < side; ++b) {
          if (at(br + a / box, bc + a % box) == at(br + b / box, bc + b % box)) return false;
        }
      }
    }
  }
  return true;
}

const std::vector<Grid4>& all_4x4_grids() {
  static const std::vector<Grid4> grids = [] {
    std::vector<std::array<int, 4>> perms;
    std::array<int, 4> p{1, 2, 3, 4};
    do {
      perms.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    std::vector<Grid4> out;
    std::vector<int> digits(16);
    for (const auto& r0 : perms) {
      for (const auto& r1 : perms) {
        for (const auto& r2 : perms) {
          for (const auto& r3 : perms) {
            const std::array<const std::array<int, 4>*, 4> rows{&r0, &r1, &r2, &r3};
            for (int r = 0; r < 4; ++r) {
              for (int c = 0; c < 4; ++c) digits[static_cast<std::size_t>(r * 4 + c)] = (*rows[static_cast<std::size_t>(r)])[static_cast<std::size_t>(c)];
            }
            if (sudoku_rules_hold(digits, 4)) {
              Grid4 g{};
              std::copy(digits.begin(), digits.end(), g.begin());
              out.push_back(g);
            }
          }
        }
      }
    }
    return out;
  }();
  return grids;
}

std::vector<Grid4> solve_sudoku_exhaustive(const Assignment& partial) {
  if (partial.size() != 16) throw std::invalid_argument("solve_sudoku_exhaustive: 4x4 only");
  std::vector<Grid4> out;
  for (const auto& g : all_4x4_grids()) {
    bool agrees = true;
    for (std::size_t i = 0; i < 16; ++i) {
      if (partial.values[i] != kBlank && partial.values[i] != g[i]) {
        agrees = false;
        break;
      }
    }
    if (agrees) out.push_back(g);
  }
  return out;
}

}  // namespace reflx::oracle
