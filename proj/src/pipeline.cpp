#include "reflx/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <omp.h>

#include "json.hpp"
#include "reflx/oracles.hpp"
#include "reflx/rng.hpp"

namespace reflx {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_lengths(const Assignment& x, const Assignment& yhat, std::size_t r_size) {
  if (yhat.size() != x.size() || r_size != x.size()) {
    throw std::invalid_argument("reflection: input, output and flag lengths differ (" +
                                std::to_string(x.size()) + ", " + std::to_string(yhat.size()) +
                                ", " + std::to_string(r_size) + ")");
  }
}

}  // namespace

Assignment apply_reflection(const Assignment& x, const Assignment& yhat, const ReflectionVector& r) {
  check_lengths(x, yhat, r.size());
  Assignment out(x.size());
  out.clue = x.clue;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.is_clue(i)) {
      out.values[i] = x.values[i];
    } else if (r[i] == 0) {
      out.values[i] = yhat.values[i];
    }
  }
  return out;
}

RectifyOutcome rectify(const Assignment& x, const Assignment& yhat, const ReflectionVector& r,
                       const KnowledgeBase& kb) {
  RectifyOutcome out;
  const Assignment partial = apply_reflection(x, yhat, r);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] != 0 && !x.is_clue(i)) ++out.flagged_count;  // flags on clues have no effect
  }
  out.blank_count = partial.blank_count();
  const auto t0 = Clock::now();
  out.final = kb.abduce(partial);
  out.kb_query_count = 1;
  if (!out.final) {
    out.fallback_used = true;
    out.final = kb.abduce(x.clues_only());
    out.kb_query_count = 2;
  }
  out.abduction_seconds = seconds_since(t0);
  return out;
}

namespace {

// Flags the ceil(n * (1 - retain)) non-clue positions with the lowest key,
// lower index first on ties.
ReflectionVector flag_lowest(const std::vector<double>& key, const Assignment& x,
                             double retain_fraction, const char* who) {
  if (!(retain_fraction > 0.0 && retain_fraction <= 1.0)) {
    throw std::invalid_argument(std::string(who) + ": retain fraction must be in (0, 1]");
  }
  const std::size_t n = key.size();
  if (x.size() != n) throw std::invalid_argument(std::string(who) + ": length mismatch");
  // Guard against 0.8 -> 0.19999999999999996 style round-off before the ceiling.
  const double want = static_cast<double>(n) * (1.0 - retain_fraction);
  const auto quota = static_cast<std::size_t>(std::ceil(want - 1e-9));

  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < n; ++i) {
    if (!x.is_clue(i)) free.push_back(i);
  }
  std::stable_sort(free.begin(), free.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  ReflectionVector r(n, 0);
  for (std::size_t k = 0; k < std::min(quota, free.size()); ++k) r[free[k]] = 1;
  return r;
}

}  // namespace

ReflectionVector select_by_confidence(const ForwardResult& fr, const Assignment& x,
                                      double retain_fraction) {
  std::vector<double> confidence(fr.size(), 0.0);
  for (std::size_t i = 0; i < fr.size(); ++i) {
    const auto row = fr.cell_probs.row(i);
    confidence[i] = *std::max_element(row.begin(), row.end());
  }
  return flag_lowest(confidence, x, retain_fraction, "select_by_confidence");
}

ReflectionVector select_by_flag_probability(const ForwardResult& fr, const Assignment& x,
                                            double retain_fraction) {
  std::vector<double> key(fr.size());
  for (std::size_t i = 0; i < fr.size(); ++i) key[i] = -fr.flag_probs[i];
  return flag_lowest(key, x, retain_fraction, "select_by_flag_probability");
}

ZerothOrderResult zeroth_order_select(const Assignment& yhat, const Assignment& x,
                                      const KnowledgeBase& kb, std::size_t budget,
                                      std::uint64_t seed, ZerothOrderFitness scoring) {
  if (budget < 1) throw std::invalid_argument("zeroth_order_select: budget must be >= 1");
  check_lengths(x, yhat, yhat.size());

  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x.is_clue(i)) free.push_back(i);
  }
  const std::size_t f = free.size();
  Rng rng(seed);
  ZerothOrderResult result;
  ReflectionVector mask(x.size(), 0);

  // One KB query. A blanked board that already breaks a rule cannot be
  // completed, so the solver call is skipped for it (the query still counts).
  auto query = [&](long& fitness) -> bool {
    ++result.queries;
    const Assignment partial = apply_reflection(x, yhat, mask);
    const ConsistencyScore score = kb.score(partial);
    fitness = scoring == ZerothOrderFitness::Guided ? score.points : 0;
    if (!score.fully_consistent) return false;
    auto done = kb.abduce(partial);
    if (!done) return false;
    result.r = mask;
    result.completion = std::move(done);
    return true;
  };

  long fitness = 0;
  if (query(fitness)) return result;

  // Smaller flag sets come first: size k gets as many candidates as there are
  // k-subsets (capped by what is left of the budget) before k grows. Within a
  // size, hill climbing restarts from a fresh random subset every f moves.
  auto subsets = [&](std::size_t k) {
    double c = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
      c = c * static_cast<double>(f - j) / static_cast<double>(j + 1);
      if (c > static_cast<double>(budget)) return budget;
    }
    return static_cast<std::size_t>(std::llround(c));
  };

  std::vector<std::size_t> order = free;
  for (std::size_t k = 1; k <= f; ++k) {
    const std::size_t effort = subsets(k);
    std::size_t spent = 0;
    while (spent < effort) {
      if (result.queries >= budget) return result;
      rng.shuffle(order);
      std::vector<std::size_t> in(order.begin(), order.begin() + static_cast<long>(k));
      std::vector<std::size_t> out(order.begin() + static_cast<long>(k), order.end());
      std::fill(mask.begin(), mask.end(), 0);
      for (auto i : in) mask[i] = 1;
      ++spent;
      if (query(fitness)) return result;
      for (std::size_t step = 0; step < f && spent < effort && !out.empty(); ++step) {
        if (result.queries >= budget) return result;
        const std::size_t a = rng.index(in.size()), b = rng.index(out.size());
        mask[in[a]] = 0;
        mask[out[b]] = 1;
        long candidate = 0;
        ++spent;
        if (query(candidate)) return result;
        if (candidate >= fitness) {
          fitness = candidate;
          std::swap(in[a], out[b]);
        } else {
          mask[in[a]] = 1;
          mask[out[b]] = 0;
        }
      }
    }
  }
  return result;
}

SelectionQuality evaluate_selection(const ReflectionVector& r, const Assignment& yhat,
                                    const Assignment& y_true) {
  if (r.size() != yhat.size() || yhat.size() != y_true.size()) {
    throw std::invalid_argument("evaluate_selection: length mismatch");
  }
  SelectionQuality q;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (y_true.is_clue(i)) continue;
    const bool wrong = yhat.values[i] != y_true.values[i];
    if (wrong) ++q.errors;
    if (r[i]) ++q.flagged;
    if (wrong && r[i]) ++q.hits;
  }
  if (q.errors > 0) q.recall = static_cast<double>(q.hits) / static_cast<double>(q.errors);
  if (q.flagged > 0) q.precision = static_cast<double>(q.hits) / static_cast<double>(q.flagged);
  return q;
}

// ---- instances --------------------------------------------------------------------

std::vector<Instance> sudoku_instances(const std::vector<SudokuRecord>& records,
                                       SudokuBackend backend) {
  std::vector<Instance> out;
  if (records.empty()) return out;
  const int side = records.front().side();
  auto adjacency = std::make_shared<const ad::Matrix>(mean_adjacency(build_sudoku_graph(side)));
  auto kb = std::make_shared<const SudokuKB>(side, backend);
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].side() != side) throw std::invalid_argument("sudoku_instances: mixed board sizes");
    Instance inst;
    inst.id = std::to_string(i);
    inst.adjacency = adjacency;
    inst.kb = kb;
    inst.x = records[i].puzzle_assignment();
    inst.truth = records[i].solution_assignment();
    inst.symbols = sudoku_symbols(inst.x);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> graph_instances(const std::vector<Graph>& graphs, TaskKind task) {
  if (task == TaskKind::Sudoku) throw std::invalid_argument("graph_instances: graph task required");
  const GraphTask gt = task == TaskKind::Clique ? GraphTask::Clique : GraphTask::IndependentSet;
  std::vector<Instance> out;
  out.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    Instance inst;
    inst.id = std::to_string(i);
    auto g = std::make_shared<const Graph>(graphs[i]);
    inst.graph = g;
    inst.adjacency = std::make_shared<const ad::Matrix>(mean_adjacency(*g));
    inst.kb = std::make_shared<const GraphKB>(*g, gt);
    inst.symbols = graph_symbols(*g);
    inst.x = Assignment(g->node_count());
    const NodeSet best = gt == GraphTask::Clique ? oracle::max_clique(*g)
                                                 : oracle::max_independent_set(*g);
    inst.truth = Assignment(g->node_count());
    std::fill(inst.truth.values.begin(), inst.truth.values.end(), 0);
    for (int v : best) inst.truth.values[static_cast<std::size_t>(v)] = 1;
    inst.optimum = best.size();
    out.push_back(std::move(inst));
  }
  return out;
}

// ---- evaluation -------------------------------------------------------------------

Selector Selector::parse(const std::string& text) {
  Selector s;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (head == "reflection" && arg.empty()) {
      s.kind = Kind::Reflection;
    } else if (head == "none" && arg.empty()) {
      s.kind = Kind::None;
    } else if (head == "confidence" || head == "reflection-top") {
      s.kind = head == "confidence" ? Kind::Confidence : Kind::ReflectionTop;
      if (!arg.empty()) s.retain = std::stod(arg);
      if (!(s.retain > 0.0 && s.retain <= 1.0)) throw std::invalid_argument("retain");
    } else if (head == "zeroth") {
      s.kind = Kind::ZerothOrder;
      if (!arg.empty()) s.budget = std::stoul(arg);
      if (s.budget < 1) throw std::invalid_argument("budget");
    } else {
      throw std::invalid_argument("kind");
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("bad selector '" + text +
                                "' (expected reflection, reflection-top:<f>, confidence:<f>, zeroth:<budget> or none)");
  }
  return s;
}

std::string Selector::str() const {
  switch (kind) {
    case Kind::Reflection: return "reflection";
    case Kind::None: return "none";
    case Kind::ReflectionTop:
    case Kind::Confidence: {
      std::ostringstream out;
      out << (kind == Kind::Confidence ? "confidence:" : "reflection-top:") << retain;
      return out.str();
    }
    case Kind::ZerothOrder: return "zeroth:" + std::to_string(budget);
  }
  return "?";
}

std::string to_json(const ExampleRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["flagged_count"] = r.flagged_count;
  j["fallback_used"] = r.fallback_used;
  j["timeout"] = r.timeout;
  j["correct"] = r.correct;
  j["raw_correct"] = r.raw_correct;
  j["network_seconds"] = r.network_seconds;
  j["abduction_seconds"] = r.abduction_seconds;
  j["kb_query_count"] = r.kb_query_count;
  j["blank_count"] = r.blank_count;
  j["errors"] = r.errors;
  j["hits"] = r.hits;
  j["ratio"] = r.ratio;
  return j.dump();
}

ExampleRecord evaluate_instance(const ReflModel& model, const Instance& inst,
                                const Selector& selector, std::uint64_t seed) {
  ExampleRecord rec;
  rec.id = inst.id;
  const KnowledgeBase& kb = *inst.kb;
  const auto t0 = Clock::now();
  const ForwardResult fr = model.forward(inst.symbols, *inst.adjacency);
  Decoded dec = decode(fr, DecodeMode::Argmax);
  Assignment yhat = dec.yhat;
  yhat.clue = inst.x.clue;
  ReflectionVector r(yhat.size(), 0);
  if (selector.kind == Selector::Kind::Reflection) r = dec.r;
  if (selector.kind == Selector::Kind::Confidence) r = select_by_confidence(fr, inst.x, selector.retain);
  if (selector.kind == Selector::Kind::ReflectionTop) {
    r = select_by_flag_probability(fr, inst.x, selector.retain);
  }
  rec.network_seconds = seconds_since(t0);

  std::optional<Assignment> final;
  switch (selector.kind) {
    case Selector::Kind::None:
      final = yhat;
      break;
    case Selector::Kind::Reflection:
    case Selector::Kind::ReflectionTop:
    case Selector::Kind::Confidence: {
      RectifyOutcome o = rectify(inst.x, yhat, r, kb);
      final = std::move(o.final);
      rec.fallback_used = o.fallback_used;
      rec.kb_query_count = o.kb_query_count;
      rec.abduction_seconds = o.abduction_seconds;
      rec.blank_count = o.blank_count;
      break;
    }
    case Selector::Kind::ZerothOrder: {
      const auto ta = Clock::now();
      ZerothOrderResult z = zeroth_order_select(yhat, inst.x, kb, selector.budget, seed);
      rec.abduction_seconds = seconds_since(ta);
      rec.kb_query_count = z.queries;
      rec.timeout = z.timeout();
      if (!rec.timeout) {
        r = *z.r;
        final = std::move(z.completion);
        rec.blank_count = apply_reflection(inst.x, yhat, r).blank_count();
      }
      break;
    }
  }
  rec.overall_seconds = seconds_since(t0);

  const SelectionQuality q = evaluate_selection(r, yhat, inst.truth);
  rec.flagged_count = q.flagged;
  rec.errors = q.errors;
  rec.hits = q.hits;
  rec.consistent = final.has_value() && kb.score(*final).fully_consistent;

  if (inst.is_graph()) {
    const auto optimum = static_cast<double>(inst.optimum);
    if (rec.consistent) {
      const std::size_t size = selected_nodes(*final).size();
      rec.ratio = static_cast<double>(size) / optimum;
      rec.correct = size == inst.optimum;
    }
    if (kb.score(yhat).fully_consistent) {
      const std::size_t size = selected_nodes(yhat).size();
      rec.raw_ratio = static_cast<double>(size) / optimum;
      rec.raw_correct = size == inst.optimum;
    }
  } else {
    rec.correct = final.has_value() && final->values == inst.truth.values;
    rec.raw_correct = yhat.values == inst.truth.values;
    rec.ratio = rec.correct ? 1.0 : 0.0;
    rec.raw_ratio = rec.raw_correct ? 1.0 : 0.0;
  }
  return rec;
}

EvalOutput evaluate_solver_only(const std::vector<Instance>& instances, int workers) {
  EvalOutput out;
  out.records.resize(instances.size());
  const auto total = static_cast<long>(instances.size());
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads != 1)
  for (long i = 0; i < total; ++i) {
    try {
      const Instance& inst = instances[static_cast<std::size_t>(i)];
      ExampleRecord& rec = out.records[static_cast<std::size_t>(i)];
      rec.id = inst.id;
      rec.blank_count = inst.x.blank_count();
      const auto t0 = Clock::now();
      const std::optional<Assignment> final = inst.kb->abduce(inst.x);
      rec.abduction_seconds = seconds_since(t0);
      rec.overall_seconds = rec.abduction_seconds;
      rec.kb_query_count = 1;
      rec.consistent = final.has_value() && inst.kb->score(*final).fully_consistent;
      if (inst.is_graph()) {
        const std::size_t size = rec.consistent ? selected_nodes(*final).size() : 0;
        rec.ratio = static_cast<double>(size) / static_cast<double>(inst.optimum);
        rec.correct = rec.consistent && size == inst.optimum;
      } else {
        rec.correct = final.has_value() && final->values == inst.truth.values;
        rec.ratio = rec.correct ? 1.0 : 0.0;
      }
    } catch (const std::exception& e) {
#pragma omp critical(reflx_eval_failure)
      if (failure.empty()) failure = "instance " + std::to_string(i) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw std::runtime_error("evaluate_solver_only: " + failure);
  for (const auto& r : out.records) out.metrics.add(r);
  return out;
}

void RunMetrics::add(const ExampleRecord& r) {
  ++count;
  correct += r.correct;
  raw_correct += r.raw_correct;
  correct_without_fallback += r.correct && !r.fallback_used;
  consistent += r.consistent;
  fallbacks += r.fallback_used;
  timeouts += r.timeout;
  errors += r.errors;
  hits += r.hits;
  flagged += r.flagged_count;
  blanks += r.blank_count;
  queries += r.kb_query_count;
  network_seconds += r.network_seconds;
  abduction_seconds += r.abduction_seconds;
  overall_seconds += r.overall_seconds;
  ratio_sum += r.ratio;
  raw_ratio_sum += r.raw_ratio;
}

void RunMetrics::merge(const RunMetrics& o) {
  count += o.count;
  correct += o.correct;
  raw_correct += o.raw_correct;
  correct_without_fallback += o.correct_without_fallback;
  consistent += o.consistent;
  fallbacks += o.fallbacks;
  timeouts += o.timeouts;
  errors += o.errors;
  hits += o.hits;
  flagged += o.flagged;
  blanks += o.blanks;
  queries += o.queries;
  network_seconds += o.network_seconds;
  abduction_seconds += o.abduction_seconds;
  overall_seconds += o.overall_seconds;
  ratio_sum += o.ratio_sum;
  raw_ratio_sum += o.raw_ratio_sum;
}

std::string RunMetrics::to_json(bool with_timing) const {
  nlohmann::json j;
  j["count"] = count;
  j["accuracy"] = accuracy();
  j["raw_accuracy"] = raw_accuracy();
  j["accuracy_without_fallback"] = accuracy_without_fallback();
  j["consistency_rate"] = consistency_rate();
  j["fallback_rate"] = fallback_rate();
  j["timeout_rate"] = timeout_rate();
  j["recall"] = recall();
  j["precision"] = precision();
  j["mean_flagged"] = mean_flagged();
  j["mean_blanks"] = mean_blanks();
  j["mean_kb_queries"] = mean_queries();
  j["approximation_ratio"] = approximation_ratio();
  j["raw_approximation_ratio"] = raw_approximation_ratio();
  if (with_timing) {
    j["mean_network_seconds"] = mean_network_seconds();
    j["mean_abduction_seconds"] = mean_abduction_seconds();
    j["mean_overall_seconds"] = mean_overall_seconds();
  }
  return j.dump();
}

std::string RunMetrics::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "examples            " << count << "\n"
      << "accuracy            " << accuracy() << "\n"
      << "raw accuracy        " << raw_accuracy() << "\n"
      << "acc. w/o fallback   " << accuracy_without_fallback() << "\n"
      << "consistency rate    " << consistency_rate() << "\n"
      << "fallback rate       " << fallback_rate() << "\n"
      << "timeout rate        " << timeout_rate() << "\n"
      << "recall / precision  " << recall() << " / " << precision() << "\n"
      << "mean flagged        " << mean_flagged() << "\n"
      << "mean blanks         " << mean_blanks() << "\n"
      << "mean KB queries     " << mean_queries() << "\n"
      << "approx. ratio       " << approximation_ratio() << " (raw " << raw_approximation_ratio() << ")\n";
  out.precision(6);
  out << "time nn / abd / all " << mean_network_seconds() << " / " << mean_abduction_seconds()
      << " / " << mean_overall_seconds() << " s\n";
  return out.str();
}

EvalOutput evaluate(const ReflModel& model, const std::vector<Instance>& instances,
                    const Selector& selector, std::uint64_t seed, int workers) {
  EvalOutput out;
  out.records.resize(instances.size());
  const auto total = static_cast<long>(instances.size());
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  std::string failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads != 1)
  for (long i = 0; i < total; ++i) {
    try {
      out.records[static_cast<std::size_t>(i)] =
          evaluate_instance(model, instances[static_cast<std::size_t>(i)], selector,
                            mix_seed(seed, static_cast<std::uint64_t>(i)));
    } catch (const std::exception& e) {
#pragma omp critical(reflx_eval_failure)
      if (failure.empty()) failure = "instance " + std::to_string(i) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw std::runtime_error("evaluate: " + failure);
  for (const auto& r : out.records) out.metrics.add(r);
  return out;
}

}  // namespace reflx
