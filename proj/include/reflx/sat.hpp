#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "reflx/knowledge.hpp"

namespace reflx {

// Conflict-driven clause-learning solver: two-watched-literal unit
// propagation, first-UIP learning with non-chronological backjumping, and
// branching on the lowest-index unassigned variable (true first).
class SatSolver {
 public:
  explicit SatSolver(const CnfFormula& formula);

  enum class Result { Sat, Unsat };
  Result solve();

  // Valid after solve() returned Sat; indexed by 1-based variable id.
  bool model_value(int variable) const { return model_[static_cast<std::size_t>(variable - 1)] != 0; }

  // DIMACS literals. May be called between solve() calls; returns false once
  // the clause set is known unsatisfiable.
  bool add_clause(const std::vector<int>& dimacs_literals);

  struct Stats {
    std::uint64_t decisions = 0;
    std::uint64_t conflicts = 0;
    std::uint64_t propagations = 0;
    std::uint64_t learned = 0;
  };
  const Stats& stats() const { return stats_; }
  int variable_count() const { return static_cast<int>(assigns_.size()); }

 private:
  using Lit = int;  // 2*var + negated
  static Lit lit_of(int dimacs) { return dimacs > 0 ? 2 * (dimacs - 1) : 2 * (-dimacs - 1) + 1; }
  static int var_of(Lit l) { return l >> 1; }

  // 1 true, 0 false, -1 unassigned
  int value(Lit l) const {
    const int a = assigns_[static_cast<std::size_t>(var_of(l))];
    return a < 0 ? -1 : a ^ (l & 1);
  }
  int decision_level() const { return static_cast<int>(trail_lim_.size()); }

  void enqueue(Lit l, int reason);
  int propagate();  // conflicting clause index or -1
  void analyze(int conflict, std::vector<Lit>& learnt, int& backtrack_level);
  void cancel_until(int level);
  int attach(std::vector<Lit> clause);

  std::vector<std::vector<Lit>> clauses_;
  std::vector<std::vector<int>> watches_;
  std::vector<std::int8_t> assigns_;
  std::vector<int> level_;
  std::vector<int> reason_;
  std::vector<Lit> trail_;
  std::vector<int> trail_lim_;
  std::vector<std::uint8_t> seen_;
  std::vector<std::uint8_t> model_;
  std::size_t qhead_ = 0;
  bool unsat_ = false;
  Stats stats_;
};

// Models of `f`, counted up to `limit` via blocking clauses over all variables.
std::size_t count_models(const CnfFormula& f, std::size_t limit);

}  // namespace reflx
