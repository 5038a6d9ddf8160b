#include "reflx/training.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "reflx/data.hpp"
#include "reflx/kernels.hpp"
#include "reflx/rng.hpp"

namespace reflx {

// ---- config -------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  std::size_t used = 0;
  T out{};
  if constexpr (std::is_same_v<T, int>) {
    out = std::stoi(v, &used);
  } else if constexpr (std::is_same_v<T, double>) {
    out = std::stod(v, &used);
  } else {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = static_cast<T>(std::stoull(v, &used));
  }
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return out;
}

}  // namespace

std::string to_string(ConEstimator e) { return e == ConEstimator::Joint ? "joint" : "reflection"; }

ConEstimator parse_con_estimator(const std::string& name) {
  if (name == "reflection") return ConEstimator::Reflection;
  if (name == "joint") return ConEstimator::Joint;
  throw std::invalid_argument("unknown consistency estimator '" + name + "'");
}

TrainConfig TrainConfig::parse(std::istream& in) {
  TrainConfig c;
  std::vector<std::string> problems;
  std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"task", [&](const std::string& v) { c.task = parse_task_kind(v); }},
      {"side", [&](const std::string& v) { c.side = parse_number<int>(v); }},
      {"d", [&](const std::string& v) { c.d = parse_number<int>(v); }},
      {"T", [&](const std::string& v) { c.rounds = parse_number<int>(v); }},
      {"alpha", [&](const std::string& v) { c.alpha = parse_number<double>(v); }},
      {"beta", [&](const std::string& v) { c.beta = parse_number<double>(v); }},
      {"c", [&](const std::string& v) { c.c = parse_number<double>(v); }},
      {"epochs", [&](const std::string& v) { c.epochs = parse_number<int>(v); }},
      {"batch", [&](const std::string& v) { c.batch = parse_number<int>(v); }},
      {"lr", [&](const std::string& v) { c.lr = parse_number<double>(v); }},
      {"seed", [&](const std::string& v) { c.seed = parse_number<std::uint64_t>(v); }},
      {"labeled_fraction", [&](const std::string& v) { c.labeled_fraction = parse_number<double>(v); }},
      {"con_estimator", [&](const std::string& v) { c.con_estimator = parse_con_estimator(v); }},
      {"samples", [&](const std::string& v) { c.samples = parse_number<int>(v); }},
      {"train_data", [&](const std::string& v) { c.train_data = v; }},
      {"val_data", [&](const std::string& v) { c.val_data = v; }},
      {"val_limit", [&](const std::string& v) { c.val_limit = parse_number<std::size_t>(v); }},
      {"backend", [&](const std::string& v) { c.backend = parse_backend(v); }},
      {"workers", [&](const std::string& v) { c.workers = parse_number<int>(v); }},
      {"checkpoint", [&](const std::string& v) { c.checkpoint = v; }},
      {"metrics", [&](const std::string& v) { c.metrics = v; }},
  };
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      problems.push_back("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      continue;
    }
    seen.insert(key);
    try {
      it->second(value);
    } catch (const std::exception&) {
      problems.push_back("line " + std::to_string(line_no) + ": bad value '" + value + "' for " + key);
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  // Graph models default to a narrower body.
  if (c.task != TaskKind::Sudoku && !seen.count("d")) c.d = ModelConfig::graph(c.task).d;
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse(in);
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (alpha < 0) problems.push_back("alpha must be >= 0");
  if (beta < 0) problems.push_back("beta must be >= 0");
  if (!(c > 0.0 && c < 1.0)) problems.push_back("c must lie in (0, 1)");
  if (epochs < 1) problems.push_back("epochs must be >= 1");
  if (batch < 1) problems.push_back("batch must be >= 1");
  if (!(lr > 0.0)) problems.push_back("lr must be > 0");
  if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) {
    problems.push_back("labeled_fraction must lie in [0, 1]");
  }
  if (samples < 1) problems.push_back("samples must be >= 1");
  if (d < 1) problems.push_back("d must be >= 1");
  if (rounds < 0) problems.push_back("T must be >= 0");
  if (task == TaskKind::Sudoku && side != 4 && side != 9) problems.push_back("side must be 4 or 9");
  if (workers < 0) problems.push_back("workers must be >= 0");
  if (train_data.empty()) {
    problems.push_back("train_data is required");
  } else if (!std::filesystem::exists(train_data)) {
    problems.push_back("train_data '" + train_data + "' does not exist");
  }
  if (!val_data.empty() && !std::filesystem::exists(val_data)) {
    problems.push_back("val_data '" + val_data + "' does not exist");
  }
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

ModelConfig TrainConfig::model_config() const {
  return task == TaskKind::Sudoku ? ModelConfig::sudoku(side, d, rounds)
                                  : ModelConfig::graph(task, d, rounds);
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "task = " << to_string(task) << "\n"
      << "side = " << side << "\n"
      << "d = " << d << "\n"
      << "T = " << rounds << "\n"
      << "alpha = " << alpha << "\n"
      << "beta = " << beta << "\n"
      << "c = " << c << "\n"
      << "epochs = " << epochs << "\n"
      << "batch = " << batch << "\n"
      << "lr = " << lr << "\n"
      << "seed = " << seed << "\n"
      << "labeled_fraction = " << labeled_fraction << "\n"
      << "con_estimator = " << to_string(con_estimator) << "\n"
      << "samples = " << samples << "\n"
      << "train_data = " << train_data << "\n"
      << "val_data = " << val_data << "\n"
      << "val_limit = " << val_limit << "\n"
      << "backend = " << to_string(backend) << "\n"
      << "workers = " << workers << "\n"
      << "checkpoint = " << checkpoint << "\n"
      << "metrics = " << metrics << "\n";
  return out.str();
}

// ---- losses -------------------------------------------------------------------------

void RewardBaseline::update(double delta) {
  if (!initialized) {
    value = delta;
    initialized = true;
  } else {
    value = decay * value + (1.0 - decay) * delta;
  }
}

long delta_con(const Assignment& yhat, const ReflectionVector& r, const Assignment& x,
               const KnowledgeBase& kb) {
  const Assignment blanked = apply_reflection(x, yhat, r);
  return kb.score(blanked).points - kb.score(yhat).points;
}

ConsistencySample loss_con(ad::Tape& tape, const ReflModel::Nodes& nodes, const Assignment& x,
                           const KnowledgeBase& kb, const RewardBaseline& baseline,
                           int value_base, std::uint64_t seed, ConEstimator estimator,
                           int samples) {
  if (samples < 1) throw std::invalid_argument("loss_con: samples must be >= 1");
  ForwardResult fr;
  fr.cell_logits = nodes.cell_logits.to_matrix();
  fr.cell_probs = ad::Matrix(fr.cell_logits.shape.rows, fr.cell_logits.shape.cols);
  kernels::softmax_rows(fr.cell_logits.values.data(), fr.cell_probs.values.data(),
                        fr.cell_logits.shape.rows, fr.cell_logits.shape.cols);
  auto fp = nodes.flag_probs.values();
  fr.flag_probs.assign(fp.begin(), fp.end());
  fr.value_base = value_base;

  const auto k = static_cast<std::size_t>(samples);
  const DecodeMode mode = estimator == ConEstimator::Joint ? DecodeMode::Sample : DecodeMode::SampleFlags;
  ConsistencySample s;
  for (std::size_t j = 0; j < k; ++j) {
    Decoded d = decode(fr, mode, k == 1 ? seed : mix_seed(seed, j));
    d.yhat.clue = x.clue;
    s.deltas.push_back(delta_con(d.yhat, d.r, x, kb));
    s.decoded.push_back(std::move(d));
  }
  long total = 0;
  for (long d : s.deltas) total += d;
  for (std::size_t j = 0; j < k; ++j) {
    const double b = k == 1 ? baseline.value
                            : static_cast<double>(total - s.deltas[j]) / static_cast<double>(k - 1);
    s.rewards.push_back(static_cast<double>(s.deltas[j]) - b);
  }

  // Reward in units of the best attainable score and a per-position mean of the
  // log-probability, so the term is on the same scale as the size loss.
  const double scale = 1.0 / (static_cast<double>(kb.max_points()) *
                              static_cast<double>(fr.size()) * static_cast<double>(k));
  ad::Tensor loss;
  for (std::size_t j = 0; j < k; ++j) {
    const ad::Tensor logp = estimator == ConEstimator::Joint
                                ? joint_log_prob(tape, nodes, s.decoded[j].classes, s.decoded[j].r)
                                : reflection_log_prob(tape, nodes, s.decoded[j].r);
    const ad::Tensor term = ad::multiply(logp, tape.constant(ad::Matrix::scalar(-s.rewards[j] * scale)));
    loss = j == 0 ? term : ad::add(loss, term);
  }
  s.loss = loss;
  return s;
}

ad::Tensor loss_size(const ad::Tensor& flag_probs, double c) {
  ad::Tape& tape = *flag_probs.tape();
  // C - mean(1 - p) = (C - 1) + mean(p)
  const ad::Tensor excess =
      ad::relu(ad::add(ad::mean(flag_probs), tape.constant(ad::Matrix::scalar(c - 1.0))));
  return ad::multiply(excess, excess);
}

ad::Tensor loss_labeled(const ad::Tensor& cell_logits, std::span<const int> classes) {
  return ad::cross_entropy(cell_logits, classes);
}

std::vector<int> truth_classes(const Instance& inst, int value_base) {
  std::vector<int> out(inst.truth.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inst.truth.values[i] - value_base;
  return out;
}

BatchLoss total_loss(const ReflModel& model, std::span<const Instance* const> batch,
                     const TrainConfig& config, const RewardBaseline& baseline,
                     std::uint64_t seed, Gradients* grads) {
  const std::size_t b = batch.size();
  BatchLoss out;
  if (b == 0) return out;
  for (const Instance* inst : batch) out.labeled_count += inst->labeled ? 1 : 0;
  const double w_all = 1.0 / static_cast<double>(b);
  const double w_lab = out.labeled_count ? 1.0 / static_cast<double>(out.labeled_count) : 0.0;
  const int base = model.config().value_base();

  struct PerExample {
    double labeled = 0.0, con = 0.0, size = 0.0, total = 0.0;
    std::vector<long> deltas;
    std::optional<Gradients> g;
  };
  std::vector<PerExample> per(b);
  std::string failure;
  const int threads = config.workers > 0 ? config.workers : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads != 1)
  for (long i = 0; i < static_cast<long>(b); ++i) {
    try {
      const Instance& inst = *batch[static_cast<std::size_t>(i)];
      PerExample& pe = per[static_cast<std::size_t>(i)];
      ad::Tape tape;
      const auto bound = model.params().bind(tape);
      const auto nodes = model.forward(tape, bound, inst.symbols, *inst.adjacency);

      ConsistencySample s = loss_con(tape, nodes, inst.x, *inst.kb, baseline, base,
                                     mix_seed(seed, static_cast<std::uint64_t>(i)),
                                     config.con_estimator, config.samples);
      const ad::Tensor size = loss_size(nodes.flag_probs, config.c);
      pe.deltas = s.deltas;
      pe.con = s.loss.item();
      pe.size = size.item();
      ad::Tensor total = ad::add(
          ad::multiply(s.loss, tape.constant(ad::Matrix::scalar(config.alpha * w_all))),
          ad::multiply(size, tape.constant(ad::Matrix::scalar(config.beta * w_all))));
      if (inst.labeled) {
        const auto classes = truth_classes(inst, base);
        const ad::Tensor lab = loss_labeled(nodes.cell_logits, classes);
        pe.labeled = lab.item();
        total = ad::add(total, ad::multiply(lab, tape.constant(ad::Matrix::scalar(w_lab))));
      }
      pe.total = total.item();
      if (grads) {
        tape.backward(total);
        pe.g = Gradients::zeros_like(model.params());
        pe.g->accumulate(bound);
      }
    } catch (const std::exception& e) {
#pragma omp critical(reflx_train_failure)
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw TrainingError("total_loss: " + failure);

  if (grads) *grads = Gradients::zeros_like(model.params());
  double delta_sum = 0.0;
  std::size_t delta_count = 0;
  for (std::size_t i = 0; i < b; ++i) {
    out.total += per[i].total;
    out.labeled += per[i].labeled * w_lab;
    out.con += per[i].con * w_all;
    out.size += per[i].size * w_all;
    for (long d : per[i].deltas) {
      out.deltas.push_back(d);
      delta_sum += static_cast<double>(d);
      ++delta_count;
    }
    if (grads) grads->add(*per[i].g);
  }
  out.mean_delta = delta_count ? delta_sum / static_cast<double>(delta_count) : 0.0;
  return out;
}

// ---- training loop ----------------------------------------------------------------------

std::string EpochMetrics::to_json(bool with_timing) const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["loss_labeled"] = loss_labeled;
  j["loss_con"] = loss_con;
  j["loss_size"] = loss_size;
  j["mean_delta_con"] = mean_delta_con;
  j["baseline"] = baseline;
  if (with_timing) j["seconds"] = seconds;
  j["best"] = best;
  j["validation"] = nlohmann::json::parse(validation.to_json(with_timing));
  return j.dump();
}

void assign_labels(std::vector<Instance>& instances, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(instances.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x1abe1));
  rng.shuffle(order);
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(instances.size()) - 1e-9));
  for (std::size_t k = 0; k < order.size(); ++k) instances[order[k]].labeled = k < keep;
}

namespace {

bool finite(const BatchLoss& l) {
  return std::isfinite(l.total) && std::isfinite(l.labeled) && std::isfinite(l.con) &&
         std::isfinite(l.size);
}

// Lexicographic: accuracy, accuracy without fallback, raw accuracy, flag
// recall, approximation ratio. A full tie goes to the newer epoch.
bool better(const RunMetrics& a, const RunMetrics& b) {
  if (a.correct != b.correct) return a.correct > b.correct;
  if (a.correct_without_fallback != b.correct_without_fallback) {
    return a.correct_without_fallback > b.correct_without_fallback;
  }
  if (a.raw_correct != b.raw_correct) return a.raw_correct > b.raw_correct;
  if (a.recall() != b.recall()) return a.recall() > b.recall();
  return a.ratio_sum >= b.ratio_sum;
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<Instance>& train_set,
                  const std::vector<Instance>& val_set,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (train_set.empty()) throw TrainingError("train: empty training set");
  ReflModel model(config.model_config(), mix_seed(config.seed, 0x5eed));
  // Start the flags at the budget: from 0.5 the size loss drives them into
  // saturation, where sampled flags stop carrying a gradient.
  model.params()[model.params().index_of("refl_b")].value =
      ad::Matrix::scalar(std::log((1.0 - config.c) / config.c));
  const AdamOptions adam{config.lr};
  RewardBaseline baseline;
  std::vector<Instance> val(val_set.begin(),
                            config.val_limit && config.val_limit < val_set.size()
                                ? val_set.begin() + static_cast<long>(config.val_limit)
                                : val_set.end());

  TrainResult result{model, 0, {}};
  RunMetrics best_metrics;
  bool have_best = false;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(config.batch);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch), 0xe90c));
    rng.shuffle(order);
    EpochMetrics em;
    em.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batches) {
      std::vector<const Instance*> items;
      for (std::size_t k = start; k < std::min(start + batch, order.size()); ++k) {
        items.push_back(&train_set[order[k]]);
      }
      Gradients grads;
      const std::uint64_t step_seed =
          mix_seed(config.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batches + 1));
      const BatchLoss bl = total_loss(model, items, config, baseline, step_seed, &grads);
      if (!finite(bl)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << batches << ": total=" << bl.total
            << " labeled=" << bl.labeled << " con=" << bl.con << " size=" << bl.size
            << " baseline=" << baseline.value;
        throw TrainingError(msg.str());
      }
      try {
        adam_update(model.params(), grads, adam);
      } catch (const std::runtime_error& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                            ": " + e.what());
      }
      for (long d : bl.deltas) baseline.update(static_cast<double>(d));
      em.loss += bl.total;
      em.loss_labeled += bl.labeled;
      em.loss_con += bl.con;
      em.loss_size += bl.size;
      em.mean_delta_con += bl.mean_delta;
    }
    const double nb = static_cast<double>(batches);
    em.loss /= nb;
    em.loss_labeled /= nb;
    em.loss_con /= nb;
    em.loss_size /= nb;
    em.mean_delta_con /= nb;
    em.baseline = baseline.value;

    if (!val.empty()) {
      em.validation = evaluate(model, val, Selector{}, mix_seed(config.seed, 0x7a1), config.workers).metrics;
    }
    if (!have_best || val.empty() || better(em.validation, best_metrics)) {
      have_best = true;
      best_metrics = em.validation;
      result.model = model;
      result.best_epoch = epoch;
      em.best = true;
    }
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return result;
}

Datasets load_datasets(const TrainConfig& config) {
  config.validate();
  Datasets out;
  if (config.task == TaskKind::Sudoku) {
    auto records = load_sudoku_csv(config.train_data);
    if (records.empty()) throw ConfigError("train_data holds no puzzles");
    std::vector<SudokuRecord> val_records;
    if (!config.val_data.empty()) {
      val_records = load_sudoku_csv(config.val_data);
    } else {
      const std::size_t hold = std::max<std::size_t>(1, records.size() / 10);
      if (records.size() > 1) {
        val_records.assign(records.end() - static_cast<long>(hold), records.end());
        records.resize(records.size() - hold);
      }
    }
    for (const auto* set : {&records, &val_records}) {
      for (const auto& r : *set) {
        if (r.side() != config.side) {
          throw ConfigError("dataset holds " + std::to_string(r.side()) + "x" +
                            std::to_string(r.side()) + " boards but side = " + std::to_string(config.side));
        }
      }
    }
    out.train = sudoku_instances(records, config.backend);
    out.val = sudoku_instances(val_records, config.backend);
  } else {
    auto graphs = read_graph_dataset(config.train_data);
    if (graphs.empty()) throw ConfigError("train_data holds no graphs");
    std::vector<Graph> val_graphs;
    if (!config.val_data.empty()) {
      val_graphs = read_graph_dataset(config.val_data);
    } else if (graphs.size() > 1) {
      const std::size_t hold = std::max<std::size_t>(1, graphs.size() / 10);
      val_graphs.assign(graphs.end() - static_cast<long>(hold), graphs.end());
      graphs.resize(graphs.size() - hold);
    }
    out.train = graph_instances(graphs, config.task);
    out.val = graph_instances(val_graphs, config.task);
  }
  assign_labels(out.train, config.labeled_fraction, config.seed);
  return out;
}

}  // namespace reflx
