#include "reflx/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "reflx/kernels.hpp"
#include "reflx/rng.hpp"

namespace reflx {

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Sudoku: return "sudoku";
    case TaskKind::Clique: return "clique";
    case TaskKind::IndependentSet: return "mis";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "sudoku") return TaskKind::Sudoku;
  if (name == "clique") return TaskKind::Clique;
  if (name == "mis") return TaskKind::IndependentSet;
  throw std::invalid_argument("unknown task '" + name + "' (expected sudoku, clique or mis)");
}

ModelConfig ModelConfig::sudoku(int side, int d, int rounds) {
  if (side != 4 && side != 9) throw std::invalid_argument("sudoku side must be 4 or 9");
  return {TaskKind::Sudoku, side, d, rounds};
}

ModelConfig ModelConfig::graph(TaskKind task, int d, int rounds) {
  if (task == TaskKind::Sudoku) throw std::invalid_argument("ModelConfig::graph needs a graph task");
  return {task, 0, d, rounds};
}

std::string ModelConfig::arch_line() const {
  std::ostringstream out;
  out << "task=" << to_string(task) << " side=" << side << " d=" << d << " T=" << rounds;
  return out.str();
}

ModelConfig ModelConfig::parse_arch_line(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("arch line: bad token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"task", "side", "d", "T"}) {
    if (!kv.count(key)) throw std::invalid_argument(std::string("arch line: missing ") + key);
  }
  ModelConfig c;
  c.task = parse_task_kind(kv["task"]);
  c.side = std::stoi(kv["side"]);
  c.d = std::stoi(kv["d"]);
  c.rounds = std::stoi(kv["T"]);
  if (c.d < 1 || c.rounds < 0) throw std::invalid_argument("arch line: bad d or T");
  if (c.is_sudoku() && c.side != 4 && c.side != 9) {
    throw std::invalid_argument("arch line: sudoku side must be 4 or 9");
  }
  return c;
}

std::vector<int> sudoku_symbols(const Assignment& x) {
  std::vector<int> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = x.blank(i) ? 0 : x.values[i];
  return s;
}

std::vector<int> graph_symbols(const Graph& g) {
  if (g.node_count() == 0) throw std::invalid_argument("graph_symbols: empty graph");
  std::vector<int> s(g.node_count());
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    s[v] = std::min(static_cast<int>(g.degree(static_cast<int>(v))), kGraphDegreeSymbols - 1);
  }
  return s;
}

ad::Matrix mean_adjacency(const Graph& g) {
  const std::size_t n = g.node_count();
  ad::Matrix a(n, n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = g.neighbors(static_cast<int>(v));
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    for (int u : nb) a.at(v, static_cast<std::size_t>(u)) = w;
  }
  return a;
}

ReflModel::ReflModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(config.d);
  params_.add_uniform("embed", static_cast<std::size_t>(config.symbols()), d, rng);
  for (int t = 0; t < config.rounds; ++t) {
    const std::string k = std::to_string(t);
    params_.add_uniform("msg" + k, d, d, rng);
    params_.add_uniform("upd" + k, 3 * d, d, rng);
    params_.add_zeros("upd_b" + k, 1, d);
  }
  params_.add_uniform("out_w", d, static_cast<std::size_t>(config.classes()), rng);
  params_.add_zeros("out_b", 1, static_cast<std::size_t>(config.classes()));
  params_.add_uniform("refl_w", d, 1, rng);
  params_.add_zeros("refl_b", 1, 1);
}

ReflModel::Nodes ReflModel::forward(ad::Tape& tape, std::span<const ad::Tensor> bound,
                                    std::span<const int> symbols,
                                    const ad::Matrix& adjacency) const {
  const std::size_t n = symbols.size();
  if (adjacency.shape.rows != n || adjacency.shape.cols != n) {
    throw std::invalid_argument("forward: " + std::to_string(n) + " input positions but graph has " +
                                std::to_string(adjacency.shape.rows) + " nodes");
  }
  if (n == 0) throw std::invalid_argument("forward: empty input");
  if (bound.size() != params_.size()) throw std::invalid_argument("forward: parameter count mismatch");
  for (int s : symbols) {
    if (s < 0 || s >= config_.symbols()) {
      throw std::invalid_argument("forward: input symbol " + std::to_string(s) + " outside [0," +
                                  std::to_string(config_.symbols()) + ")");
    }
  }

  std::size_t p = 0;
  const ad::Tensor adj = tape.constant(adjacency);
  const ad::Tensor h0 = ad::gather_rows(bound[p++], symbols);
  ad::Tensor h = h0;
  for (int t = 0; t < config_.rounds; ++t) {
    const ad::Tensor& w_msg = bound[p++];
    const ad::Tensor& w_upd = bound[p++];
    const ad::Tensor& b_upd = bound[p++];
    const ad::Tensor m = ad::matmul(adj, ad::matmul(h, w_msg));
    const ad::Tensor parts[] = {h, m, h0};
    const ad::Tensor z = ad::add(ad::matmul(ad::concat_cols(parts), w_upd), b_upd);
    h = ad::add(ad::relu(z), h0);
  }
  const ad::Tensor& w_out = bound[p++];
  const ad::Tensor& b_out = bound[p++];
  const ad::Tensor& w_r = bound[p++];
  const ad::Tensor& b_r = bound[p++];

  Nodes nodes;
  nodes.cell_logits = ad::add(ad::matmul(h, w_out), b_out);
  nodes.flag_logits = ad::add(ad::matmul(h, w_r), b_r);
  nodes.flag_probs = ad::sigmoid(nodes.flag_logits);
  return nodes;
}

ForwardResult ReflModel::forward(std::span<const int> symbols, const ad::Matrix& adjacency) const {
  ad::Tape tape;
  std::vector<ad::Tensor> bound;
  bound.reserve(params_.size());
  for (const auto& e : params_) bound.push_back(tape.constant(e.value));
  const Nodes nodes = forward(tape, bound, symbols, adjacency);

  ForwardResult fr;
  fr.cell_logits = nodes.cell_logits.to_matrix();
  fr.cell_probs = ad::Matrix(fr.cell_logits.shape.rows, fr.cell_logits.shape.cols);
  kernels::softmax_rows(fr.cell_logits.values.data(), fr.cell_probs.values.data(),
                        fr.cell_logits.shape.rows, fr.cell_logits.shape.cols);
  auto fp = nodes.flag_probs.values();
  fr.flag_probs.assign(fp.begin(), fp.end());
  fr.value_base = config_.value_base();
  return fr;
}

void ReflModel::save(const std::string& path) const {
  save_checkpoint(path, config_.arch_line(), params_);
}

ReflModel ReflModel::load(const std::string& path) {
  const CheckpointContents contents = read_checkpoint(path);
  ReflModel model(ModelConfig::parse_arch_line(contents.arch_line), 0);
  load_into(contents, model.params_);
  return model;
}

Decoded decode(const ForwardResult& fr, DecodeMode mode, std::uint64_t seed) {
  const std::size_t n = fr.cell_probs.shape.rows;
  const std::size_t k = fr.cell_probs.shape.cols;
  Decoded out;
  out.yhat = Assignment(n);
  out.yhat.clue.clear();
  out.r.assign(n, 0);
  out.classes.assign(n, 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = fr.cell_probs.row(i);
    std::size_t c = 0;
    if (mode != DecodeMode::Sample) {
      for (std::size_t j = 1; j < k; ++j) {
        if (row[j] > row[c]) c = j;
      }
      out.r[i] = mode == DecodeMode::Argmax ? (fr.flag_probs[i] >= 0.5 ? 1 : 0)
                                            : (rng.uniform() < fr.flag_probs[i] ? 1 : 0);
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      c = k - 1;
      for (std::size_t j = 0; j < k; ++j) {
        acc += row[j];
        if (u < acc) {
          c = j;
          break;
        }
      }
      out.r[i] = rng.uniform() < fr.flag_probs[i] ? 1 : 0;
    }
    out.classes[i] = static_cast<int>(c);
    out.yhat.values[i] = static_cast<int>(c) + fr.value_base;
  }
  return out;
}

ad::Tensor joint_log_prob(ad::Tape& tape, const ReflModel::Nodes& nodes,
                          std::span<const int> classes, const ReflectionVector& r) {
  const std::size_t n = nodes.flag_logits.shape().rows;
  if (classes.size() != n || r.size() != n) {
    throw std::invalid_argument("joint_log_prob: decode length differs from model output");
  }
  std::vector<int> flags(r.begin(), r.end());
  const ad::Tensor parts[] = {tape.constant(ad::Matrix(n, 1)), nodes.flag_logits};
  const ad::Tensor flag_two = ad::concat_cols(parts);
  const ad::Tensor ce = ad::add(ad::cross_entropy(nodes.cell_logits, classes),
                                ad::cross_entropy(flag_two, flags));
  return ad::multiply(ce, tape.constant(ad::Matrix::scalar(-static_cast<double>(n))));
}

ad::Tensor reflection_log_prob(ad::Tape& tape, const ReflModel::Nodes& nodes,
                               const ReflectionVector& r) {
  const std::size_t n = nodes.flag_logits.shape().rows;
  if (r.size() != n) throw std::invalid_argument("reflection_log_prob: flag length differs");
  std::vector<int> flags(r.begin(), r.end());
  const ad::Tensor parts[] = {tape.constant(ad::Matrix(n, 1)), nodes.flag_logits};
  return ad::multiply(ad::cross_entropy(ad::concat_cols(parts), flags),
                      tape.constant(ad::Matrix::scalar(-static_cast<double>(n))));
}

}  // namespace reflx
