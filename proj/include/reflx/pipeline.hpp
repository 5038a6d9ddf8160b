#pragma once

// Inference: intuitive output -> reflection -> blanked output -> abduction,
// plus the alternative error selectors and the metrics they are compared by.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reflx/assignment.hpp"
#include "reflx/data.hpp"
#include "reflx/knowledge.hpp"
#include "reflx/model.hpp"

namespace reflx {

// Flagged positions become blank; clue positions keep their clue value.
Assignment apply_reflection(const Assignment& x, const Assignment& yhat, const ReflectionVector& r);

struct RectifyOutcome {
  std::optional<Assignment> final;  // absent only if clue-only abduction is UNSAT
  std::size_t flagged_count = 0;
  std::size_t blank_count = 0;  // blanks handed to the first abduction call
  bool fallback_used = false;
  std::size_t kb_query_count = 0;
  double network_seconds = 0.0;
  double abduction_seconds = 0.0;
};

// One abduction over apply_reflection(x, yhat, r); on UNSAT a second call over
// the clue-only board. network_seconds is left for the caller to fill.
RectifyOutcome rectify(const Assignment& x, const Assignment& yhat, const ReflectionVector& r,
                       const KnowledgeBase& kb);

// Flags the ceil(n * (1 - retain_fraction)) non-clue positions with the lowest
// max class probability (n = all positions), lower index first on ties.
ReflectionVector select_by_confidence(const ForwardResult& fr, const Assignment& x,
                                      double retain_fraction);

// The same quota as select_by_confidence, filled with the highest flag
// probabilities: the reflection at a flag budget matched to the confidence
// selector.
ReflectionVector select_by_flag_probability(const ForwardResult& fr, const Assignment& x,
                                            double retain_fraction);

struct ZerothOrderResult {
  std::optional<ReflectionVector> r;  // absent on timeout
  std::optional<Assignment> completion;
  std::size_t queries = 0;
  bool timeout() const { return !r.has_value(); }
};

// What a candidate flag set is scored by during zeroth-order search.
//   Blackbox: only whether the KB query succeeded, so the climb is a random
//             walk over subsets of each size.
//   Guided:   Con of the blanked board, which points the climb at cells in
//             duplicate pairs.
enum class ZerothOrderFitness { Blackbox, Guided };

// Search over flag subsets of growing size k = 0, 1, ...: size k gets up to
// C(f, k) candidates (f = free positions) of swap-move hill climbing with
// random restarts before k grows. Every candidate costs one KB query; the
// first candidate whose abduction succeeds is returned.
ZerothOrderResult zeroth_order_select(const Assignment& yhat, const Assignment& x,
                                      const KnowledgeBase& kb, std::size_t budget,
                                      std::uint64_t seed,
                                      ZerothOrderFitness fitness = ZerothOrderFitness::Blackbox);

struct SelectionQuality {
  double recall = 1.0;
  double precision = 1.0;
  std::size_t flagged = 0;
  std::size_t errors = 0;
  std::size_t hits = 0;
};

// Errors are positions where yhat differs from y_true; clue positions of
// y_true are skipped. Recall is 1 with no errors, precision 1 with no flags.
SelectionQuality evaluate_selection(const ReflectionVector& r, const Assignment& yhat,
                                    const Assignment& y_true);

// ---- datasets as model inputs ----------------------------------------------------

struct Instance {
  std::string id;
  std::shared_ptr<const Graph> graph;  // graph tasks only
  std::shared_ptr<const ad::Matrix> adjacency;
  std::shared_ptr<const KnowledgeBase> kb;
  std::vector<int> symbols;
  Assignment x;      // the input; for graph tasks all blank, no clues
  Assignment truth;  // solution, or an oracle-optimal set for graph tasks
  bool labeled = true;
  std::size_t optimum = 0;  // oracle set size (graph tasks)
  bool is_graph() const { return graph != nullptr; }
};

std::vector<Instance> sudoku_instances(const std::vector<SudokuRecord>& records,
                                       SudokuBackend backend);
// Truth comes from the Bron-Kerbosch oracle.
std::vector<Instance> graph_instances(const std::vector<Graph>& graphs, TaskKind task);

// ---- evaluation -----------------------------------------------------------------

struct Selector {
  enum class Kind { Reflection, ReflectionTop, Confidence, ZerothOrder, None };
  Kind kind = Kind::Reflection;
  double retain = 0.8;
  std::size_t budget = 10000;

  // reflection | reflection-top:<f> | confidence:<f> | zeroth:<b> | none
  static Selector parse(const std::string& text);
  std::string str() const;
};

struct ExampleRecord {
  std::string id;
  std::size_t flagged_count = 0;
  std::size_t blank_count = 0;
  bool fallback_used = false;
  bool timeout = false;
  bool correct = false;
  bool raw_correct = false;
  bool consistent = false;
  double network_seconds = 0.0;
  double abduction_seconds = 0.0;
  double overall_seconds = 0.0;
  std::size_t kb_query_count = 0;
  std::size_t errors = 0;
  std::size_t hits = 0;
  double ratio = 0.0;      // graph tasks: |set| / optimum
  double raw_ratio = 0.0;  // same for the raw output (0 when not a valid set)
};

std::string to_json(const ExampleRecord& r);

ExampleRecord evaluate_instance(const ReflModel& model, const Instance& inst,
                                const Selector& selector, std::uint64_t seed);

// Sums over examples; merge is associative, so per-worker partial metrics can
// be combined in any grouping.
struct RunMetrics {
  std::size_t count = 0;
  std::size_t correct = 0;
  std::size_t raw_correct = 0;
  std::size_t correct_without_fallback = 0;
  std::size_t consistent = 0;
  std::size_t fallbacks = 0;
  std::size_t timeouts = 0;
  std::size_t errors = 0;
  std::size_t hits = 0;
  std::size_t flagged = 0;
  std::size_t blanks = 0;
  std::size_t queries = 0;
  double network_seconds = 0.0;
  double abduction_seconds = 0.0;
  double overall_seconds = 0.0;
  double ratio_sum = 0.0;
  double raw_ratio_sum = 0.0;

  void add(const ExampleRecord& r);
  void merge(const RunMetrics& other);

  double accuracy() const { return rate(correct); }
  double raw_accuracy() const { return rate(raw_correct); }
  double accuracy_without_fallback() const { return rate(correct_without_fallback); }
  double consistency_rate() const { return rate(consistent); }
  double fallback_rate() const { return rate(fallbacks); }
  double timeout_rate() const { return rate(timeouts); }
  double recall() const { return errors == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(errors); }
  double precision() const { return flagged == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(flagged); }
  double mean_flagged() const { return mean(static_cast<double>(flagged)); }
  double mean_blanks() const { return mean(static_cast<double>(blanks)); }
  double mean_queries() const { return mean(static_cast<double>(queries)); }
  double mean_network_seconds() const { return mean(network_seconds); }
  double mean_abduction_seconds() const { return mean(abduction_seconds); }
  double mean_overall_seconds() const { return mean(overall_seconds); }
  double approximation_ratio() const { return mean(ratio_sum); }
  double raw_approximation_ratio() const { return mean(raw_ratio_sum); }

  // Without timing the JSON is a pure function of model, data and seed.
  std::string to_json(bool with_timing = true) const;
  std::string to_text() const;

 private:
  double rate(std::size_t k) const { return count == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(count); }
  double mean(double total) const { return count == 0 ? 0.0 : total / static_cast<double>(count); }
};

struct EvalOutput {
  RunMetrics metrics;
  std::vector<ExampleRecord> records;
};

// Parallel over instances with `workers` threads (0 = OpenMP default).
EvalOutput evaluate(const ReflModel& model, const std::vector<Instance>& instances,
                    const Selector& selector, std::uint64_t seed, int workers = 0);

// One abduction over each clue-only input, no network.
EvalOutput evaluate_solver_only(const std::vector<Instance>& instances, int workers = 0);

}  // namespace reflx
