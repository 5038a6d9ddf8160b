#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflx/autodiff.hpp"
#include "reflx/knowledge.hpp"
#include "reflx/model.hpp"
#include "reflx/optim.hpp"
#include "reflx/pipeline.hpp"

namespace reflx {

// Which log-probability the REINFORCE consistency term differentiates.
//   Reflection: argmax output, sampled flags, log f(r | x) only.
//   Joint:      sampled output and flags, log f(yhat, r | x).
enum class ConEstimator { Reflection, Joint };
std::string to_string(ConEstimator e);
ConEstimator parse_con_estimator(const std::string& name);

struct TrainConfig {
  TaskKind task = TaskKind::Sudoku;
  int side = 4;
  int d = 96;
  int rounds = 8;
  double alpha = 1.0;
  double beta = 1.0;
  double c = 0.8;
  int epochs = 30;
  int batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double labeled_fraction = 1.0;
  ConEstimator con_estimator = ConEstimator::Reflection;
  // Flag samples per example for the consistency term. With 1 the reward
  // baseline is the moving average; with more, each sample's baseline is the
  // mean reward of the other samples of the same example.
  int samples = 1;
  std::string train_data;
  std::string val_data;          // optional; otherwise the last 10% of train_data
  std::size_t val_limit = 0;     // 0 = whole validation set
  SudokuBackend backend = SudokuBackend::Sat;
  int workers = 0;               // 0 = OpenMP default
  std::string checkpoint = "model.ckpt";
  std::string metrics = "metrics.jsonl";

  // Flat "key = value" lines; '#' starts a comment. Unknown keys and bad values
  // are collected and reported together.
  static TrainConfig parse(std::istream& in);
  static TrainConfig load(const std::string& path);
  // Throws listing every violated range constraint.
  void validate() const;
  ModelConfig model_config() const;
  std::string to_text() const;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Exponential moving average of the consistency improvement, used as the
// REINFORCE baseline. The first observation initialises it.
struct RewardBaseline {
  double decay = 0.99;
  double value = 0.0;
  bool initialized = false;

  void update(double delta);
};

// Con(apply_reflection(x, yhat, r)) - Con(yhat), bonus points included.
long delta_con(const Assignment& yhat, const ReflectionVector& r, const Assignment& x,
               const KnowledgeBase& kb);

struct ConsistencySample {
  std::vector<Decoded> decoded;  // one per sample
  std::vector<long> deltas;
  std::vector<double> rewards;   // delta minus baseline, constants on the tape
  ad::Tensor loss;  // mean_k -reward_k * log f_k / (n * max_points)
};

// Draws `samples` decodes from the recorded forward pass and builds the
// REINFORCE consistency loss. Under ConEstimator::Reflection the score
// function is the reflection factor of the joint, so the output head gets no
// gradient from it. A single sample is baselined by `baseline`; several are
// baselined leave-one-out. Does not update `baseline`.
ConsistencySample loss_con(ad::Tape& tape, const ReflModel::Nodes& nodes, const Assignment& x,
                           const KnowledgeBase& kb, const RewardBaseline& baseline,
                           int value_base, std::uint64_t seed,
                           ConEstimator estimator = ConEstimator::Reflection, int samples = 1);

// max(0, C - mean(1 - p))^2
ad::Tensor loss_size(const ad::Tensor& flag_probs, double c);

// Mean cross-entropy over all positions.
ad::Tensor loss_labeled(const ad::Tensor& cell_logits, std::span<const int> classes);

std::vector<int> truth_classes(const Instance& inst, int value_base);

struct BatchLoss {
  double total = 0.0;
  double labeled = 0.0;  // mean over labeled examples
  double con = 0.0;      // mean over all examples
  double size = 0.0;
  double mean_delta = 0.0;
  std::size_t labeled_count = 0;
  std::vector<long> deltas;  // every sample, in batch order
};

// Labeled term averaged over the labeled examples of the batch, plus
// (alpha * L_con + beta * L_size) averaged over all of them. When `grads` is
// given it receives the gradient of the total. Examples run in parallel; the
// result does not depend on the thread count.
BatchLoss total_loss(const ReflModel& model, std::span<const Instance* const> batch,
                     const TrainConfig& config, const RewardBaseline& baseline,
                     std::uint64_t seed, Gradients* grads);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double loss_labeled = 0.0;
  double loss_con = 0.0;
  double loss_size = 0.0;
  double mean_delta_con = 0.0;
  double baseline = 0.0;
  double seconds = 0.0;
  RunMetrics validation;
  bool best = false;

  // Without timing, two runs with the same config and seed give the same line.
  std::string to_json(bool with_timing = true) const;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  ReflModel model;  // best-by-validation parameters
  int best_epoch = 0;
  std::vector<EpochMetrics> history;
};

// Epoch loop: shuffled batches, Adam, validation with the reflection selector
// after every epoch. The best epoch is chosen by validation accuracy, then
// accuracy without fallback, raw accuracy and flag recall; ties go to the
// later epoch. Aborts with TrainingError on a non-finite loss.
TrainResult train(const TrainConfig& config, const std::vector<Instance>& train_set,
                  const std::vector<Instance>& val_set,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct Datasets {
  std::vector<Instance> train;
  std::vector<Instance> val;
};

// Reads train_data (and val_data, or holds out the last 10% of train_data) and
// applies labeled_fraction to the training split.
Datasets load_datasets(const TrainConfig& config);

// Marks the first ceil(fraction * n) instances of a seeded permutation labeled.
void assign_labels(std::vector<Instance>& instances, double fraction, std::uint64_t seed);

}  // namespace reflx
