#include "reflx/sat.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace reflx {

SatSolver::SatSolver(const CnfFormula& formula) {
  const auto vars = static_cast<std::size_t>(formula.variable_count);
  assigns_.assign(vars, -1);
  level_.assign(vars, 0);
  reason_.assign(vars, -1);
  seen_.assign(vars, 0);
  watches_.resize(2 * vars);
  for (const auto& c : formula.clauses) {
    if (!add_clause(c)) break;
  }
}

bool SatSolver::add_clause(const std::vector<int>& dimacs_literals) {
  if (unsat_) return false;
  cancel_until(0);
  std::vector<Lit> lits;
  for (int d : dimacs_literals) {
    if (d == 0 || std::abs(d) > variable_count()) {
      throw std::invalid_argument("SatSolver: literal " + std::to_string(d) + " out of range");
    }
    lits.push_back(lit_of(d));
  }
  std::sort(lits.begin(), lits.end());
  lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
  std::vector<Lit> kept;
  for (std::size_t i = 0; i < lits.size(); ++i) {
    if (i + 1 < lits.size() && lits[i + 1] == (lits[i] ^ 1)) return true;  // tautology
    const int v = value(lits[i]);
    if (v == 1) return true;
    if (v == -1) kept.push_back(lits[i]);
  }
  if (kept.empty()) {
    unsat_ = true;
    return false;
  }
  if (kept.size() == 1) {
    enqueue(kept[0], -1);
    if (propagate() >= 0) {
      unsat_ = true;
      return false;
    }
    return true;
  }
  attach(std::move(kept));
  return true;
}

int SatSolver::attach(std::vector<Lit> clause) {
  const int index = static_cast<int>(clauses_.size());
  watches_[static_cast<std::size_t>(clause[0])].push_back(index);
  watches_[static_cast<std::size_t>(clause[1])].push_back(index);
  clauses_.push_back(std::move(clause));
  return index;
}

void SatSolver::enqueue(Lit l, int reason) {
  const auto v = static_cast<std::size_t>(var_of(l));
  assigns_[v] = static_cast<std::int8_t>((l & 1) ^ 1);
  level_[v] = decision_level();
  reason_[v] = reason;
  trail_.push_back(l);
}

int SatSolver::propagate() {
  while (qhead_ < trail_.size()) {
    const Lit p = trail_[qhead_++];
    const Lit false_lit = p ^ 1;
    auto& ws = watches_[static_cast<std::size_t>(false_lit)];
    std::size_t i = 0, j = 0;
    while (i < ws.size()) {
      const int ci = ws[i++];
      auto& c = clauses_[static_cast<std::size_t>(ci)];
      if (c[0] == false_lit) std::swap(c[0], c[1]);
      if (value(c[0]) == 1) {
        ws[j++] = ci;
        continue;
      }
      bool moved = false;
      for (std::size_t k = 2; k < c.size(); ++k) {
        if (value(c[k]) != 0) {
          std::swap(c[1], c[k]);
          watches_[static_cast<std::size_t>(c[1])].push_back(ci);
          moved = true;
          break;
        }
      }
      if (moved) continue;
      ws[j++] = ci;
      if (value(c[0]) == 0) {
        while (i < ws.size()) ws[j++] = ws[i++];
        ws.resize(j);
        qhead_ = trail_.size();
        return ci;
      }
      ++stats_.propagations;
      enqueue(c[0], ci);
    }
    ws.resize(j);
  }
  return -1;
}

void SatSolver::analyze(int conflict, std::vector<Lit>& learnt, int& backtrack_level) {
  learnt.clear();
  learnt.push_back(-1);
  int path_count = 0;
  Lit p = -1;
  std::size_t index = trail_.size();
  int reason = conflict;
  do {
    const auto& c = clauses_[static_cast<std::size_t>(reason)];
    for (std::size_t k = (p == -1 ? 0 : 1); k < c.size(); ++k) {
      const Lit q = c[k];
      const auto v = static_cast<std::size_t>(var_of(q));
      if (seen_[v] || level_[v] == 0) continue;
      seen_[v] = 1;
      if (level_[v] >= decision_level()) {
        ++path_count;
      } else {
        learnt.push_back(q);
      }
    }
    while (!seen_[static_cast<std::size_t>(var_of(trail_[--index]))]) {
    }
    p = trail_[index];
    reason = reason_[static_cast<std::size_t>(var_of(p))];
    seen_[static_cast<std::size_t>(var_of(p))] = 0;
    --path_count;
  } while (path_count > 0);
  learnt[0] = p ^ 1;

  backtrack_level = 0;
  std::size_t max_at = 1;
  for (std::size_t k = 1; k < learnt.size(); ++k) {
    const int lv = level_[static_cast<std::size_t>(var_of(learnt[k]))];
    if (lv > backtrack_level) {
      backtrack_level = lv;
      max_at = k;
    }
  }
  if (learnt.size() > 1) std::swap(learnt[1], learnt[max_at]);
  for (Lit l : learnt) seen_[static_cast<std::size_t>(var_of(l))] = 0;
}

void SatSolver::cancel_until(int level) {
  if (decision_level() <= level) return;
  const auto stop = static_cast<std::size_t>(trail_lim_[static_cast<std::size_t>(level)]);
  for (std::size_t k = trail_.size(); k-- > stop;) {
    const auto v = static_cast<std::size_t>(var_of(trail_[k]));
    assigns_[v] = -1;
    reason_[v] = -1;
  }
  trail_.resize(stop);
  trail_lim_.resize(static_cast<std::size_t>(level));
  qhead_ = trail_.size();
}

SatSolver::Result SatSolver::solve() {
  if (unsat_) return Result::Unsat;
  cancel_until(0);
  std::vector<Lit> learnt;
  for (;;) {
    const int conflict = propagate();
    if (conflict >= 0) {
      ++stats_.conflicts;
      if (decision_level() == 0) {
        unsat_ = true;
        return Result::Unsat;
      }
      int backtrack_level = 0;
      analyze(conflict, learnt, backtrack_level);
      cancel_until(backtrack_level);
      if (learnt.size() == 1) {
        enqueue(learnt[0], -1);
      } else {
        ++stats_.learned;
        const Lit asserting = learnt[0];
        const int ci = attach(learnt);
        enqueue(asserting, ci);
      }
      continue;
    }
    int next = -1;
    for (std::size_t v = 0; v < assigns_.size(); ++v) {
      if (assigns_[v] < 0) {
        next = static_cast<int>(v);
        break;
      }
    }
    if (next < 0) {
      model_.assign(assigns_.begin(), assigns_.end());
      return Result::Sat;
    }
    ++stats_.decisions;
    trail_lim_.push_back(static_cast<int>(trail_.size()));
    enqueue(2 * next, -1);
  }
}

std::size_t count_models(const CnfFormula& f, std::size_t limit) {
  SatSolver solver(f);
  std::size_t count = 0;
  while (count < limit && solver.solve() == SatSolver::Result::Sat) {
    ++count;
    std::vector<int> block;
    block.reserve(static_cast<std::size_t>(f.variable_count));
    for (int v = 1; v <= f.variable_count; ++v) block.push_back(solver.model_value(v) ? -v : v);
    if (!solver.add_clause(block)) break;
  }
  return count;
}

}  // namespace reflx
