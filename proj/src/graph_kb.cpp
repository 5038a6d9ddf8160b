#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "reflx/knowledge.hpp"

namespace reflx {

namespace {

void validate_set(const Graph& g, const NodeSet& s, const char* what) {
  std::vector<std::uint8_t> seen(g.node_count(), 0);
  for (int v : s) {
    if (v < 0 || static_cast<std::size_t>(v) >= g.node_count()) {
      throw std::invalid_argument(std::string(what) + ": node " + std::to_string(v) +
                                  " out of range");
    }
    if (seen[static_cast<std::size_t>(v)]) {
      throw std::invalid_argument(std::string(what) + ": duplicate node " + std::to_string(v));
    }
    seen[static_cast<std::size_t>(v)] = 1;
  }
}

// Max-clique branch and bound with a greedy-colouring upper bound. Colour
// classes are built over the candidate list; the colour number of a vertex
// bounds the clique size reachable from the candidates up to it.
class CliqueSearch {
 public:
  explicit CliqueSearch(const Graph& g) : g_(g) {}

  NodeSet run(const NodeSet& seed, std::vector<int> candidates) {
    current_ = seed;
    best_ = seed;
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](int a, int b) { return g_.degree(a) > g_.degree(b); });
    expand(candidates);
    std::sort(best_.begin(), best_.end());
    return best_;
  }

 private:
  void colour_sort(const std::vector<int>& p, std::vector<int>& order, std::vector<int>& colour) {
    std::vector<std::vector<int>> classes;
    for (int v : p) {
      std::size_t k = 0;
      for (; k < classes.size(); ++k) {
        bool clash = false;
        for (int u : classes[k]) {
          if (g_.has_edge(u, v)) {
            clash = true;
            break;
          }
        }
        if (!clash) break;
      }
      if (k == classes.size()) classes.emplace_back();
      classes[k].push_back(v);
    }
    order.clear();
    colour.clear();
    for (std::size_t k = 0; k < classes.size(); ++k) {
      for (int v : classes[k]) {
        order.push_back(v);
        colour.push_back(static_cast<int>(k) + 1);
      }
    }
  }

  void expand(const std::vector<int>& p) {
    std::vector<int> order, colour;
    colour_sort(p, order, colour);
    for (std::size_t i = order.size(); i-- > 0;) {
      if (current_.size() + static_cast<std::size_t>(colour[i]) <= best_.size()) return;
      const int v = order[i];
      std::vector<int> next;
      for (std::size_t j = 0; j < i; ++j) {
        if (g_.has_edge(v, order[j])) next.push_back(order[j]);
      }
      current_.push_back(v);
      if (next.empty()) {
        if (current_.size() > best_.size()) best_ = current_;
      } else {
        expand(next);
      }
      current_.pop_back();
    }
  }

  const Graph& g_;
  NodeSet current_;
  NodeSet best_;
};

ConsistencyScore score_pairs(const Graph& g, const NodeSet& s, bool want_edge) {
  validate_set(g, s, want_edge ? "con_clique" : "con_mis");
  ConsistencyScore score;
  bool ok = true;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      if (g.has_edge(s[i], s[j]) == want_edge) {
        ++score.points;
      } else {
        ok = false;
      }
    }
  }
  if (ok) score.points += 10 * static_cast<long>(s.size());
  score.fully_consistent = ok;
  return score;
}

}  // namespace

NodeSet selected_nodes(const Assignment& a) {
  NodeSet s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values[i] == 1) s.push_back(static_cast<int>(i));
  }
  return s;
}

ConsistencyScore con_clique(const Graph& g, const NodeSet& s) { return score_pairs(g, s, true); }
ConsistencyScore con_mis(const Graph& g, const NodeSet& s) { return score_pairs(g, s, false); }

std::optional<NodeSet> abduce_clique(const Graph& g, const NodeSet& fixed_in,
                                     const NodeSet& fixed_out) {
  validate_set(g, fixed_in, "abduce_clique fixed_in");
  validate_set(g, fixed_out, "abduce_clique fixed_out");
  std::vector<std::uint8_t> state(g.node_count(), 0);  // 1 in, 2 out
  for (int v : fixed_in) state[static_cast<std::size_t>(v)] = 1;
  for (int v : fixed_out) {
    if (state[static_cast<std::size_t>(v)] == 1) {
      throw std::invalid_argument("abduce_clique: node " + std::to_string(v) +
                                  " is both fixed in and fixed out");
    }
    state[static_cast<std::size_t>(v)] = 2;
  }
  for (std::size_t i = 0; i < fixed_in.size(); ++i) {
    for (std::size_t j = i + 1; j < fixed_in.size(); ++j) {
      if (!g.has_edge(fixed_in[i], fixed_in[j])) return std::nullopt;
    }
  }
  std::vector<int> candidates;
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    if (state[v] != 0) continue;
    bool joins_all = true;
    for (int u : fixed_in) {
      if (!g.has_edge(u, static_cast<int>(v))) {
        joins_all = false;
        break;
      }
    }
    if (joins_all) candidates.push_back(static_cast<int>(v));
  }
  return CliqueSearch(g).run(fixed_in, std::move(candidates));
}

std::optional<NodeSet> abduce_mis(const Graph& g, const NodeSet& fixed_in,
                                  const NodeSet& fixed_out) {
  return abduce_clique(g.complement(), fixed_in, fixed_out);
}

std::string to_string(GraphTask t) { return t == GraphTask::Clique ? "clique" : "mis"; }

GraphTask parse_graph_task(const std::string& name) {
  if (name == "clique") return GraphTask::Clique;
  if (name == "mis") return GraphTask::IndependentSet;
  throw std::invalid_argument("unknown graph task '" + name + "' (expected clique or mis)");
}

ConsistencyScore GraphKB::score(const Assignment& a) const {
  const NodeSet s = selected_nodes(a);
  return task_ == GraphTask::Clique ? con_clique(*graph_, s) : con_mis(*graph_, s);
}

std::optional<Assignment> GraphKB::abduce(const Assignment& partial) const {
  if (partial.size() != graph_->node_count()) {
    throw std::invalid_argument("GraphKB: assignment has " + std::to_string(partial.size()) +
                                " positions for a " + std::to_string(graph_->node_count()) +
                                "-node graph");
  }
  NodeSet in, out;
  for (std::size_t i = 0; i < partial.size(); ++i) {
    if (partial.values[i] == 1) in.push_back(static_cast<int>(i));
    else if (partial.values[i] == 0) out.push_back(static_cast<int>(i));
  }
  auto chosen = task_ == GraphTask::Clique ? abduce_clique(*graph_, in, out)
                                           : abduce_mis(*graph_, in, out);
  if (!chosen) return std::nullopt;
  Assignment result = partial;
  std::fill(result.values.begin(), result.values.end(), 0);
  for (int v : *chosen) result.values[static_cast<std::size_t>(v)] = 1;
  return result;
}

}  // namespace reflx
