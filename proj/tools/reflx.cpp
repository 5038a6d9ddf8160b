// reflx: train, evaluate and benchmark reflection models from the command line.

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "reflx/data.hpp"
#include "reflx/knowledge.hpp"
#include "reflx/pipeline.hpp"
#include "reflx/rng.hpp"
#include "reflx/training.hpp"

#ifndef REFLX_GIT_DESCRIBE
#define REFLX_GIT_DESCRIBE "unknown"
#endif

using namespace reflx;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --seed beats REFLX_SEED, which beats the config file.
std::uint64_t resolve_seed(std::uint64_t fallback, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("REFLX_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("REFLX_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return fallback;
}

// ---- assertions ------------------------------------------------------------------

struct Assertion {
  std::string key;
  std::string op;
  double value = 0.0;
  std::string text;
};

Assertion parse_assertion(const std::string& text) {
  for (const char* op : {">=", "<=", "==", "!=", ">", "<"}) {
    const auto at = text.find(op);
    if (at == std::string::npos) continue;
    Assertion a;
    a.key = text.substr(0, at);
    a.op = op;
    a.text = text;
    try {
      a.value = std::stod(text.substr(at + std::strlen(op)));
    } catch (const std::exception&) {
      throw UsageError("bad assertion '" + text + "'");
    }
    if (a.key.empty()) throw UsageError("bad assertion '" + text + "'");
    return a;
  }
  throw UsageError("bad assertion '" + text + "' (expected key<op>number)");
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, double>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else if (j.is_number()) {
    out[prefix] = j.get<double>();
  } else if (j.is_boolean()) {
    out[prefix] = j.get<bool>() ? 1.0 : 0.0;
  }
}

// Prints one line per assertion; true when all hold.
bool check_assertions(const std::vector<std::string>& texts, const json& report) {
  std::map<std::string, double> values;
  flatten(report, "", values);
  bool ok = true;
  for (const auto& t : texts) {
    const Assertion a = parse_assertion(t);
    const auto it = values.find(a.key);
    if (it == values.end()) throw UsageError("assertion on unknown metric '" + a.key + "'");
    const double v = it->second;
    bool pass = false;
    if (a.op == ">=") pass = v >= a.value;
    if (a.op == "<=") pass = v <= a.value;
    if (a.op == ">") pass = v > a.value;
    if (a.op == "<") pass = v < a.value;
    if (a.op == "==") pass = v == a.value;
    if (a.op == "!=") pass = v != a.value;
    std::cout << (pass ? "PASS " : "FAIL ") << a.text << " (" << a.key << " = " << v << ")\n";
    ok = ok && pass;
  }
  return ok;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_records(const std::string& path, const std::vector<ExampleRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : records) out << to_json(r) << "\n";
}

// ---- dataset loading --------------------------------------------------------------

std::vector<Instance> load_instances(const std::string& path, const ModelConfig& arch,
                                     SudokuBackend backend) {
  if (!std::filesystem::exists(path)) throw UsageError("data file '" + path + "' does not exist");
  if (arch.is_sudoku()) {
    const auto records = load_sudoku_csv(path);
    for (const auto& r : records) {
      if (r.side() != arch.side) {
        throw UsageError("incompatible checkpoint: model expects " + std::to_string(arch.side) + "x" +
                         std::to_string(arch.side) + " boards, data has " + std::to_string(r.side()) +
                         "x" + std::to_string(r.side()));
      }
    }
    return sudoku_instances(records, backend);
  }
  return graph_instances(read_graph_dataset(path), arch.task);
}

ReflModel load_model(const std::string& path, const std::optional<std::string>& task) {
  if (!std::filesystem::exists(path)) throw UsageError("checkpoint '" + path + "' does not exist");
  ReflModel m = ReflModel::load(path);
  if (task && parse_task_kind(*task) != m.config().task) {
    throw UsageError("incompatible checkpoint: trained for " + to_string(m.config().task) +
                     ", requested " + *task);
  }
  return m;
}

json metrics_json(const RunMetrics& m) { return json::parse(m.to_json()); }

// ---- commands --------------------------------------------------------------------------

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string records;
  int workers = 0;
  bool json_output = false;
  std::vector<std::string> asserts;
};

int finish(const Common& c, const json& report, const std::string& text) {
  if (c.json_output) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::cout << text;
  }
  if (!c.out.empty()) write_json(c.out, report);
  return check_assertions(c.asserts, report) ? 0 : 1;
}

int cmd_train(const std::string& config_path, const std::string& checkpoint, const Common& c) {
  TrainConfig cfg = TrainConfig::load(config_path);
  cfg.seed = resolve_seed(cfg.seed, c.seed);
  if (c.workers > 0) cfg.workers = c.workers;
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  if (!c.out.empty()) cfg.metrics = c.out;
  const Datasets data = load_datasets(cfg);  // validates before any compute

  const std::string timing_path = cfg.metrics + ".timing.jsonl";
  std::ofstream metrics(cfg.metrics), timing(timing_path);
  if (!metrics || !timing) throw std::runtime_error("cannot write " + cfg.metrics);

  json manifest;
  manifest["command"] = "train";
  manifest["git_describe"] = REFLX_GIT_DESCRIBE;
  manifest["seed"] = cfg.seed;
  manifest["config"] = cfg.to_text();
  manifest["train_examples"] = data.train.size();
  manifest["val_examples"] = data.val.size();
  manifest["train_checksum"] = file_checksum(cfg.train_data);
  write_json(cfg.checkpoint + ".run.json", manifest);

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(cfg, data.train, data.val, [&](const EpochMetrics& m) {
    metrics << m.to_json(false) << "\n" << std::flush;
    timing << m.to_json(true) << "\n" << std::flush;
    std::cerr << "epoch " << m.epoch << " loss " << m.loss << " val acc " << m.validation.accuracy()
              << " raw " << m.validation.raw_accuracy() << " recall " << m.validation.recall()
              << (m.best ? " *" : "") << "\n";
  });
  result.model.save(cfg.checkpoint);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json report;
  report["checkpoint"] = cfg.checkpoint;
  report["best_epoch"] = result.best_epoch;
  report["epochs"] = result.history.size();
  report["train_seconds"] = seconds;
  if (result.best_epoch > 0) {
    report["validation"] = metrics_json(result.history[static_cast<std::size_t>(result.best_epoch - 1)].validation);
  }
  std::ostringstream text;
  text << "saved " << cfg.checkpoint << " (best epoch " << result.best_epoch << ", " << seconds << " s)\n";
  Common quiet = c;
  quiet.out.clear();  // --out named the metrics log
  return finish(quiet, report, text.str());
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& selector,
             const std::string& backend, const std::optional<std::string>& task, std::size_t budget,
             const Common& c) {
  const ReflModel model = load_model(checkpoint, task);
  const auto instances = load_instances(data, model.config(), parse_backend(backend));
  Selector sel = Selector::parse(selector);
  if (budget > 0) sel.budget = budget;
  const EvalOutput out = evaluate(model, instances, sel, resolve_seed(1, c.seed), c.workers);
  if (!c.records.empty()) write_records(c.records, out.records);
  json report;
  report["selector"] = sel.str();
  report["backend"] = backend;
  report["metrics"] = metrics_json(out.metrics);
  return finish(c, report, "selector " + sel.str() + "\n" + out.metrics.to_text());
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

int cmd_bench_solvers(const std::string& data, const std::string& checkpoint,
                      const std::string& backends, const std::string& mode, const Common& c) {
  if (mode != "solver-only" && mode != "refl" && mode != "both") {
    throw UsageError("--mode must be solver-only, refl or both");
  }
  const bool want_refl = mode != "solver-only";
  const bool want_solver = mode != "refl";
  std::optional<ReflModel> model;
  if (want_refl) {
    if (checkpoint.empty()) throw UsageError("refl mode needs --checkpoint");
    model = load_model(checkpoint, std::string("sudoku"));
  }
  json report;
  std::ostringstream text;
  text.setf(std::ios::fixed);
  text.precision(6);
  text << "backend  mode         accuracy  mean_blanks  abduction_s  overall_s\n";
  for (const auto& name : split_commas(backends)) {
    const SudokuBackend b = parse_backend(name);
    const auto records = load_sudoku_csv(data);
    const auto instances = sudoku_instances(records, b);
    json row;
    auto line = [&](const char* label, const RunMetrics& m) {
      text << std::left << std::setw(9) << name << std::setw(13) << label << std::setw(10)
           << m.accuracy() << std::setw(13) << m.mean_blanks() << std::setw(13)
           << m.mean_abduction_seconds() << m.mean_overall_seconds() << "\n";
    };
    std::optional<RunMetrics> solver, refl;
    if (want_solver) {
      solver = evaluate_solver_only(instances, c.workers).metrics;
      row["solver-only"] = metrics_json(*solver);
      line("solver-only", *solver);
    }
    if (want_refl) {
      if (model->config().side != records.front().side()) {
        throw UsageError("incompatible checkpoint: board side differs from the data");
      }
      refl = evaluate(*model, instances, Selector{}, resolve_seed(1, c.seed), c.workers).metrics;
      row["refl"] = metrics_json(*refl);
      line("refl", *refl);
    }
    if (solver && refl && solver->abduction_seconds > 0.0) {
      row["abduction_time_ratio"] = refl->mean_abduction_seconds() / solver->mean_abduction_seconds();
      row["blank_difference"] = solver->mean_blanks() - refl->mean_blanks();
    }
    report[name] = row;
  }
  return finish(c, report, text.str());
}

std::vector<Graph> graph_source(const std::string& data, std::size_t nodes, double p,
                                std::size_t count, std::uint64_t seed) {
  if (!data.empty()) {
    if (!std::filesystem::exists(data)) throw UsageError("data file '" + data + "' does not exist");
    return read_graph_dataset(data);
  }
  std::vector<Graph> graphs;
  for (std::size_t k = 0; k < count; ++k) graphs.push_back(generate_random_graph(nodes, p, mix_seed(seed, k)));
  return graphs;
}

int cmd_graph_bench(const std::string& task_name, const std::string& checkpoint,
                    const std::string& data, std::size_t nodes, double p, std::size_t count,
                    const std::string& selector, const Common& c) {
  const TaskKind task = parse_task_kind(task_name);
  if (task == TaskKind::Sudoku) throw UsageError("graph-bench needs --task clique or mis");
  const std::uint64_t seed = resolve_seed(1, c.seed);
  const auto graphs = graph_source(data, nodes, p, count, seed);
  for (const auto& g : graphs) {
    if (g.node_count() > 40) {
      throw UsageError("graph with " + std::to_string(g.node_count()) +
                       " nodes exceeds the oracle limit of 40");
    }
  }
  const auto instances = graph_instances(graphs, task);
  EvalOutput out;
  std::string label;
  if (checkpoint.empty()) {
    out = evaluate_solver_only(instances, c.workers);
    label = "oracle";
  } else {
    const ReflModel model = load_model(checkpoint, task_name);
    const Selector sel = Selector::parse(selector);
    out = evaluate(model, instances, sel, seed, c.workers);
    label = sel.str();
  }
  if (!c.records.empty()) write_records(c.records, out.records);
  json report;
  report["task"] = to_string(task);
  report["selector"] = label;
  report["graphs"] = graphs.size();
  report["metrics"] = metrics_json(out.metrics);
  std::ostringstream text;
  text << to_string(task) << " on " << graphs.size() << " graphs, selector " << label << "\n"
       << out.metrics.to_text();
  return finish(c, report, text.str());
}

int cmd_generate_sudoku(int side, int clues, std::size_t count, const std::string& out,
                        const Common& c) {
  if (out.empty()) throw UsageError("--out is required");
  const std::uint64_t seed = resolve_seed(1, c.seed);
  write_sudoku_csv(out, generate_sudoku(side, clues, count, seed));
  json params{{"side", side}, {"clues", clues}, {"count", count}};
  write_manifest(out, "generate-sudoku", seed, params.dump());
  std::cout << "wrote " << count << " puzzles to " << out << "\n";
  return 0;
}

int cmd_generate_graphs(std::size_t nodes, double p, std::size_t count, const std::string& out,
                        const Common& c) {
  if (out.empty()) throw UsageError("--out is required");
  const std::uint64_t seed = resolve_seed(1, c.seed);
  write_graph_dataset(out, graph_source("", nodes, p, count, seed));
  json params{{"nodes", nodes}, {"p", p}, {"count", count}};
  write_manifest(out, "generate-graphs", seed, params.dump());
  std::cout << "wrote " << count << " graphs to " << out << "\n";
  return 0;
}

int cmd_export_cnf(const std::string& data, std::size_t index, const std::string& out) {
  if (!std::filesystem::exists(data)) throw UsageError("data file '" + data + "' does not exist");
  const auto records = load_sudoku_csv(data);
  if (index >= records.size()) {
    throw UsageError("--index " + std::to_string(index) + " out of range (" +
                     std::to_string(records.size()) + " puzzles)");
  }
  const auto& r = records[index];
  const CnfFormula f = encode_cnf(r.puzzle_assignment(), r.side());
  if (out.empty() || out == "-") {
    write_dimacs(std::cout, f);
  } else {
    std::ofstream file(out);
    if (!file) throw std::runtime_error("cannot write " + out);
    write_dimacs(file, f);
  }
  return 0;
}

void add_common(CLI::App* cmd, Common& c, bool with_records = true) {
  cmd->add_option("--seed", c.seed, "Seed (overrides REFLX_SEED and the config)");
  cmd->add_option("--out", c.out, "Write the JSON report here");
  cmd->add_option("--workers", c.workers, "Worker threads (0 = all)")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--json", c.json_output, "Print JSON instead of the text table");
  cmd->add_option("--assert", c.asserts, "Metric assertion such as accuracy>=0.99 (repeatable)");
  if (with_records) cmd->add_option("--records", c.records, "Write per-example JSON lines here");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflection models for Sudoku and graph tasks"};
  app.require_subcommand(1);

  Common common;
  std::string config, checkpoint, data, selector = "reflection", backend = "sat", mode = "both";
  std::string out_file, bench_backends = "sat,csp";
  std::optional<std::string> task;
  std::string task_name = "clique";
  std::size_t budget = 0, count = 100, nodes = 20, index = 0;
  double p = 0.5;
  int side = 9, clues = 36;

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", config, "Training config (key = value lines)")->required();
  train_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path (overrides the config)");
  add_common(train_cmd, common, false);
  train_cmd->get_option("--out")->description("Metrics log path (overrides the config)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with one selector");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--data", data)->required();
  eval_cmd->add_option("--selector", selector,
                       "reflection | reflection-top:<f> | confidence:<f> | zeroth:<budget> | none");
  eval_cmd->add_option("--backend", backend, "sat | csp");
  eval_cmd->add_option("--task", task, "Expected task of the checkpoint");
  eval_cmd->add_option("--budget", budget, "KB query budget for zeroth-order search");
  add_common(eval_cmd, common);

  auto* bench_cmd = app.add_subcommand("bench-solvers", "Abduction time with and without reflection");
  bench_cmd->add_option("--data", data)->required();
  bench_cmd->add_option("--checkpoint", checkpoint);
  bench_cmd->add_option("--backend", bench_backends, "Comma-separated backends");
  bench_cmd->add_option("--mode", mode, "solver-only | refl | both");
  add_common(bench_cmd, common, false);

  auto* graph_cmd = app.add_subcommand("graph-bench", "Approximation ratio on clique or MIS");
  graph_cmd->add_option("--task", task_name, "clique | mis");
  graph_cmd->add_option("--checkpoint", checkpoint, "Model; without it the oracle is scored");
  graph_cmd->add_option("--data", data, "Graph dataset; otherwise random graphs");
  graph_cmd->add_option("--nodes", nodes);
  graph_cmd->add_option("--p", p)->check(CLI::Range(0.0, 1.0));
  graph_cmd->add_option("--count", count);
  graph_cmd->add_option("--selector", selector);
  add_common(graph_cmd, common);

  auto* gen_sudoku = app.add_subcommand("generate-sudoku", "Write uniquely solvable puzzles");
  gen_sudoku->add_option("--side", side)->check(CLI::IsMember({4, 9}));
  gen_sudoku->add_option("--clues", clues);
  gen_sudoku->add_option("--count", count);
  gen_sudoku->add_option("--seed", common.seed);
  gen_sudoku->add_option("--out", out_file)->required();

  auto* gen_graphs = app.add_subcommand("generate-graphs", "Write Erdos-Renyi graphs");
  gen_graphs->add_option("--nodes", nodes);
  gen_graphs->add_option("--p", p)->check(CLI::Range(0.0, 1.0));
  gen_graphs->add_option("--count", count);
  gen_graphs->add_option("--seed", common.seed);
  gen_graphs->add_option("--out", out_file)->required();

  auto* cnf_cmd = app.add_subcommand("export-cnf", "Write one puzzle as DIMACS CNF");
  cnf_cmd->add_option("--data", data)->required();
  cnf_cmd->add_option("--index", index);
  cnf_cmd->add_option("--out", out_file, "Output path, '-' for stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config, checkpoint, common);
    if (*eval_cmd) return cmd_eval(checkpoint, data, selector, backend, task, budget, common);
    if (*bench_cmd) return cmd_bench_solvers(data, checkpoint, bench_backends, mode, common);
    if (*graph_cmd) return cmd_graph_bench(task_name, checkpoint, data, nodes, p, count, selector, common);
    if (*gen_sudoku) return cmd_generate_sudoku(side, clues, count, out_file, common);
    if (*gen_graphs) return cmd_generate_graphs(nodes, p, count, out_file, common);
    if (*cnf_cmd) return cmd_export_cnf(data, index, out_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
