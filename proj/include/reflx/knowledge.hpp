#pragma once

// Knowledge bases: consistency scoring Con(., KB) and abduction over partial
// assignments for Sudoku (SAT or finite-domain backends) and for clique /
// independent-set membership on graphs.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reflx/assignment.hpp"
#include "reflx/graph.hpp"

namespace reflx {

struct ConsistencyScore {
  long points = 0;
  bool fully_consistent = false;
};

// ---- Sudoku -----------------------------------------------------------------

// +1 per row / column / box whose assigned cells hold no duplicate digit, +10
// when no unit has a duplicate. Blanks never count as duplicates.
ConsistencyScore con_sudoku(const Assignment& a, int side);

// Propositional encoding, DIMACS-style: variables are 1-based, a negative id
// is a negated literal.
struct CnfFormula {
  int variable_count = 0;
  std::vector<std::vector<int>> clauses;
};

// Variable for "cell holds digit" (cell 0-based, digit 1..side).
int sudoku_variable(int cell, int digit, int side);

// Cell has >= 1 digit, pairwise <= 1 digit, pairwise at-most-one per digit in
// each unit, plus a unit clause for every assigned cell.
CnfFormula encode_cnf(const Assignment& a, int side);

void write_dimacs(std::ostream& out, const CnfFormula& f);
CnfFormula read_dimacs(std::istream& in);

enum class SudokuBackend { Sat, Csp };
std::string to_string(SudokuBackend b);
SudokuBackend parse_backend(const std::string& name);

// Complete board agreeing with every assigned cell, or nullopt when the
// assigned cells cannot be completed.
std::optional<Assignment> abduce_sudoku(const Assignment& partial, SudokuBackend backend, int side);

// Number of completions, stopping at `limit`.
std::size_t count_sudoku_completions(const Assignment& partial, SudokuBackend backend, int side,
                                     std::size_t limit);

// ---- graph membership ----------------------------------------------------------

using NodeSet = std::vector<int>;

// Selected nodes of a 0/1 assignment (blanks are not selected).
NodeSet selected_nodes(const Assignment& a);

// +1 per selected pair joined by an edge, +10|s| when s is a clique.
ConsistencyScore con_clique(const Graph& g, const NodeSet& s);
// +1 per selected pair not joined by an edge, +10|s| when s is independent.
ConsistencyScore con_mis(const Graph& g, const NodeSet& s);

// Maximum clique containing fixed_in and avoiding fixed_out; nullopt iff
// fixed_in is not a clique. Throws if the sets overlap or hold invalid ids.
std::optional<NodeSet> abduce_clique(const Graph& g, const NodeSet& fixed_in,
                                     const NodeSet& fixed_out);
std::optional<NodeSet> abduce_mis(const Graph& g, const NodeSet& fixed_in,
                                  const NodeSet& fixed_out);

// ---- uniform interface -----------------------------------------------------------

class KnowledgeBase {
 public:
  virtual ~KnowledgeBase() = default;
  virtual std::size_t positions() const = 0;
  virtual ConsistencyScore score(const Assignment& a) const = 0;
  // Upper bound on score().points over all assignments.
  virtual long max_points() const = 0;
  // Complete assignment consistent with the KB and agreeing with every
  // assigned position of `partial`, or nullopt (UNSAT).
  virtual std::optional<Assignment> abduce(const Assignment& partial) const = 0;
};

class SudokuKB final : public KnowledgeBase {
 public:
  SudokuKB(int side, SudokuBackend backend) : side_(side), backend_(backend) {}
  std::size_t positions() const override { return static_cast<std::size_t>(side_ * side_); }
  ConsistencyScore score(const Assignment& a) const override { return con_sudoku(a, side_); }
  long max_points() const override { return 3L * side_ + 10; }
  std::optional<Assignment> abduce(const Assignment& partial) const override {
    return abduce_sudoku(partial, backend_, side_);
  }
  int side() const { return side_; }
  SudokuBackend backend() const { return backend_; }

 private:
  int side_;
  SudokuBackend backend_;
};

enum class GraphTask { Clique, IndependentSet };
std::string to_string(GraphTask t);
GraphTask parse_graph_task(const std::string& name);

// Positions are nodes: 1 = in the set, 0 = out, blank = free for abduction.
class GraphKB final : public KnowledgeBase {
 public:
  GraphKB(const Graph& g, GraphTask task) : graph_(&g), task_(task) {}
  std::size_t positions() const override { return graph_->node_count(); }
  ConsistencyScore score(const Assignment& a) const override;
  // Every pair plus the bonus for the whole node set.
  long max_points() const override {
    const auto n = static_cast<long>(graph_->node_count());
    return n * (n - 1) / 2 + 10 * n;
  }
  std::optional<Assignment> abduce(const Assignment& partial) const override;
  const Graph& graph() const { return *graph_; }
  GraphTask task() const { return task_; }

 private:
  const Graph* graph_;
  GraphTask task_;
};

}  // namespace reflx
