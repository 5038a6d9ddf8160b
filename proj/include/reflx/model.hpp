#pragma once

// Message-passing network with two heads over a shared body: an output head
// giving per-position class logits and a reflection head giving one flag
// logit per position.
//
//   h0   = embed[x]
//   m    = mean_{u ~ v} (h_u W_msg)
//   h    = relu([h ; m ; h0] W_upd + b) + h0        (T rounds)
//   out  = h W_out + b_out,   flag = sigmoid(h W_r + b_r)

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reflx/assignment.hpp"
#include "reflx/autodiff.hpp"
#include "reflx/graph.hpp"
#include "reflx/optim.hpp"

namespace reflx {

enum class TaskKind { Sudoku, Clique, IndependentSet };
std::string to_string(TaskKind t);
TaskKind parse_task_kind(const std::string& name);

// Degrees are clamped into this many input symbols for graph tasks.
inline constexpr int kGraphDegreeSymbols = 32;

struct ModelConfig {
  TaskKind task = TaskKind::Sudoku;
  int side = 9;  // Sudoku only
  int d = 96;
  int rounds = 8;

  static ModelConfig sudoku(int side, int d = 96, int rounds = 8);
  static ModelConfig graph(TaskKind task, int d = 64, int rounds = 8);

  bool is_sudoku() const { return task == TaskKind::Sudoku; }
  int symbols() const { return is_sudoku() ? side + 1 : kGraphDegreeSymbols; }
  int classes() const { return is_sudoku() ? side : 2; }
  // Assignment value of class 0: digits start at 1, graph membership at 0.
  int value_base() const { return is_sudoku() ? 1 : 0; }

  // "task=sudoku side=9 d=96 T=8"
  std::string arch_line() const;
  static ModelConfig parse_arch_line(const std::string& line);
  bool operator==(const ModelConfig&) const = default;
};

// Input symbols: Sudoku blank -> 0, digit k -> k; graph node -> clamped degree.
std::vector<int> sudoku_symbols(const Assignment& x);
std::vector<int> graph_symbols(const Graph& g);

// Row-normalised adjacency (isolated nodes get a zero row).
ad::Matrix mean_adjacency(const Graph& g);

struct ForwardResult {
  ad::Matrix cell_logits;  // n x |Y|
  ad::Matrix cell_probs;   // n x |Y|
  std::vector<double> flag_probs;
  int value_base = 0;

  std::size_t size() const { return flag_probs.size(); }
};

class ReflModel {
 public:
  ReflModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  struct Nodes {
    ad::Tensor cell_logits;  // n x |Y|
    ad::Tensor flag_logits;  // n x 1
    ad::Tensor flag_probs;   // n x 1
  };

  // Records a forward pass on `tape`. `bound` comes from params().bind(tape).
  Nodes forward(ad::Tape& tape, std::span<const ad::Tensor> bound, std::span<const int> symbols,
                const ad::Matrix& adjacency) const;

  // Inference forward on a private tape.
  ForwardResult forward(std::span<const int> symbols, const ad::Matrix& adjacency) const;

  void save(const std::string& path) const;
  static ReflModel load(const std::string& path);

 private:
  ModelConfig config_;
  ParameterSet params_;
};

// SampleFlags: argmax output, sampled flags.
enum class DecodeMode { Argmax, Sample, SampleFlags };

struct Decoded {
  Assignment yhat;  // clue mask left empty; the pipeline copies it from x
  ReflectionVector r;
  std::vector<int> classes;  // yhat as class indices
};

// Argmax: lowest class on ties, r_i = [p_i >= 0.5]. Sample: per position a
// categorical draw then a Bernoulli draw, from a generator seeded with `seed`.
// SampleFlags: argmax classes with Bernoulli flags.
Decoded decode(const ForwardResult& fr, DecodeMode mode, std::uint64_t seed = 0);

// log f(yhat, r | x) = sum_i log p(yhat_i) + sum_i log Bernoulli(r_i; p_i) as a
// tape node. The Bernoulli term is a two-class softmax over [0, flag_logit].
ad::Tensor joint_log_prob(ad::Tape& tape, const ReflModel::Nodes& nodes,
                          std::span<const int> classes, const ReflectionVector& r);

// sum_i log Bernoulli(r_i; p_i) alone: the factor of the joint that depends on
// the reflection head (and the shared body), not on the output head.
ad::Tensor reflection_log_prob(ad::Tape& tape, const ReflModel::Nodes& nodes,
                               const ReflectionVector& r);

}  // namespace reflx
