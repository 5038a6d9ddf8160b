#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "reflx/csp.hpp"
#include "reflx/knowledge.hpp"
#include "reflx/sat.hpp"

namespace reflx {

namespace {

int box_width(int side) {
  if (side == 4) return 2;
  if (side == 9) return 3;
  throw std::invalid_argument("unsupported Sudoku side " + std::to_string(side));
}

// The 3*side units (rows, columns, boxes) as cell index lists.
std::vector<std::vector<int>> sudoku_units(int side) {
  const int box = box_width(side);
  std::vector<std::vector<int>> units;
  for (int r = 0; r < side; ++r) {
    std::vector<int> u;
    for (int c = 0; c < side; ++c) u.push_back(r * side + c);
    units.push_back(std::move(u));
  }
  for (int c = 0; c < side; ++c) {
    std::vector<int> u;
    for (int r = 0; r < side; ++r) u.push_back(r * side + c);
    units.push_back(std::move(u));
  }
  for (int br = 0; br < side; br += box) {
    for (int bc = 0; bc < side; bc += box) {
      std::vector<int> u;
      for (int r = br; r < br + box; ++r) {
        for (int c = bc; c < bc + box; ++c) u.push_back(r * side + c);
      }
      units.push_back(std::move(u));
    }
  }
  return units;
}

const std::vector<std::vector<int>>& cached_units(int side) {
  static const auto four = sudoku_units(4);
  static const auto nine = sudoku_units(9);
  return side == 4 ? four : nine;
}

void check_board(const Assignment& a, int side) {
  box_width(side);
  const auto cells = static_cast<std::size_t>(side * side);
  if (a.size() != cells) {
    throw std::invalid_argument("Sudoku assignment has " + std::to_string(a.size()) +
                                " cells, expected " + std::to_string(cells));
  }
  for (int v : a.values) {
    if (v != kBlank && (v < 1 || v > side)) {
      throw std::invalid_argument("Sudoku digit " + std::to_string(v) + " out of range");
    }
  }
}

}  // namespace

ConsistencyScore con_sudoku(const Assignment& a, int side) {
  check_board(a, side);
  ConsistencyScore score;
  bool clean = true;
  for (const auto& unit : cached_units(side)) {
    unsigned seen = 0;
    bool dup = false;
    for (int cell : unit) {
      const int v = a.values[static_cast<std::size_t>(cell)];
      if (v == kBlank) continue;
      const unsigned bit = 1u << v;
      if (seen & bit) {
        dup = true;
        break;
      }
      seen |= bit;
    }
    if (dup) {
      clean = false;
    } else {
      ++score.points;
    }
  }
  if (clean) score.points += 10;
  score.fully_consistent = clean;
  return score;
}

int sudoku_variable(int cell, int digit, int side) { return cell * side + digit; }

CnfFormula encode_cnf(const Assignment& a, int side) {
  check_board(a, side);
  const int cells = side * side;
  CnfFormula f;
  f.variable_count = cells * side;
  for (int cell = 0; cell < cells; ++cell) {
    std::vector<int> some;
    for (int d = 1; d <= side; ++d) some.push_back(sudoku_variable(cell, d, side));
    f.clauses.push_back(std::move(some));
    for (int d1 = 1; d1 <= side; ++d1) {
      for (int d2 = d1 + 1; d2 <= side; ++d2) {
        f.clauses.push_back({-sudoku_variable(cell, d1, side), -sudoku_variable(cell, d2, side)});
      }
    }
  }
  for (const auto& unit : cached_units(side)) {
    for (int d = 1; d <= side; ++d) {
      for (std::size_t i = 0; i < unit.size(); ++i) {
        for (std::size_t j = i + 1; j < unit.size(); ++j) {
          f.clauses.push_back({-sudoku_variable(unit[i], d, side), -sudoku_variable(unit[j], d, side)});
        }
      }
    }
  }
  for (int cell = 0; cell < cells; ++cell) {
    const int v = a.values[static_cast<std::size_t>(cell)];
    if (v != kBlank) f.clauses.push_back({sudoku_variable(cell, v, side)});
  }
  return f;
}

void write_dimacs(std::ostream& out, const CnfFormula& f) {
  out << "p cnf " << f.variable_count << " " << f.clauses.size() << "\n";
  for (const auto& c : f.clauses) {
    for (int lit : c) out << lit << " ";
    out << "0\n";
  }
}

CnfFormula read_dimacs(std::istream& in) {
  CnfFormula f;
  std::string line;
  std::size_t declared = 0;
  bool header = false;
  std::vector<int> clause;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == 'c') continue;
    std::istringstream ls(line);
    if (line[0] == 'p') {
      std::string p, cnf;
      if (!(ls >> p >> cnf >> f.variable_count >> declared) || cnf != "cnf") {
        throw std::runtime_error("DIMACS: malformed header: " + line);
      }
      header = true;
      continue;
    }
    if (!header) throw std::runtime_error("DIMACS: clause before header");
    int lit = 0;
    while (ls >> lit) {
      if (lit == 0) {
        f.clauses.push_back(clause);
        clause.clear();
      } else {
        clause.push_back(lit);
      }
    }
  }
  if (!clause.empty()) f.clauses.push_back(clause);
  if (f.clauses.size() != declared) {
    throw std::runtime_error("DIMACS: header declares " + std::to_string(declared) +
                             " clauses, found " + std::to_string(f.clauses.size()));
  }
  return f;
}

std::string to_string(SudokuBackend b) { return b == SudokuBackend::Sat ? "sat" : "csp"; }

SudokuBackend parse_backend(const std::string& name) {
  if (name == "sat" || name == "SAT") return SudokuBackend::Sat;
  if (name == "csp" || name == "CSP") return SudokuBackend::Csp;
  throw std::invalid_argument("unknown backend '" + name + "' (expected sat or csp)");
}

std::optional<Assignment> abduce_sudoku(const Assignment& partial, SudokuBackend backend,
                                        int side) {
  check_board(partial, side);
  Assignment out = partial;
  if (backend == SudokuBackend::Sat) {
    SatSolver solver(encode_cnf(partial, side));
    if (solver.solve() != SatSolver::Result::Sat) return std::nullopt;
    for (int cell = 0; cell < side * side; ++cell) {
      for (int d = 1; d <= side; ++d) {
        if (solver.model_value(sudoku_variable(cell, d, side))) {
          out.values[static_cast<std::size_t>(cell)] = d;
        }
      }
    }
    return out;
  }
  SudokuCsp csp(side);
  std::vector<int> solution;
  if (csp.search(partial, 1, &solution) == 0) return std::nullopt;
  out.values = std::move(solution);
  return out;
}

std::size_t count_sudoku_completions(const Assignment& partial, SudokuBackend backend, int side,
                                     std::size_t limit) {
  check_board(partial, side);
  if (backend == SudokuBackend::Sat) return count_models(encode_cnf(partial, side), limit);
  SudokuCsp csp(side);
  return csp.search(partial, limit);
}

}  // namespace reflx
