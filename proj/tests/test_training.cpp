#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "reflx/data.hpp"
#include "reflx/rng.hpp"
#include "reflx/training.hpp"

using namespace reflx;

namespace {

// Direct reading of the rule: a point per row, column and box free of repeated
// digits among filled cells, ten more when every unit is free of them.
long reference_con(const std::vector<int>& v, int side) {
  const int box = side == 9 ? 3 : 2;
  long clean = 0;
  auto unit_ok = [&](const std::vector<int>& cells) {
    std::set<int> seen;
    for (int c : cells) {
      const int d = v[static_cast<std::size_t>(c)];
      if (d == 0) continue;
      if (!seen.insert(d).second) return false;
    }
    return true;
  };
  for (int k = 0; k < side; ++k) {
    std::vector<int> row, col, bx;
    for (int j = 0; j < side; ++j) {
      row.push_back(k * side + j);
      col.push_back(j * side + k);
      const int br = (k / box) * box, bc = (k % box) * box;
      bx.push_back((br + j / box) * side + bc + j % box);
    }
    clean += unit_ok(row) + unit_ok(col) + unit_ok(bx);
  }
  return clean + (clean == 3L * side ? 10 : 0);
}

std::vector<int> pattern_board() {
  std::vector<int> v(81);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) v[static_cast<std::size_t>(r * 9 + c)] = (r * 3 + r / 3 + c) % 9 + 1;
  return v;
}

Assignment as_assignment(const std::vector<int>& v) {
  Assignment a(v.size());
  a.values = v;
  return a;
}

std::vector<double> grads_of(const ReflModel& m, std::span<const ad::Tensor> bound,
                             const std::string& name) {
  const auto idx = m.params().index_of(name);
  const auto g = bound[idx].grad();
  std::vector<double> out(g.begin(), g.end());
  if (out.empty()) out.assign(m.params()[idx].value.values.size(), 0.0);
  return out;
}

Instance sudoku4(std::uint64_t seed) {
  return sudoku_instances(generate_sudoku(4, 6, 1, seed), SudokuBackend::Sat)[0];
}

TrainConfig small_config() {
  TrainConfig c;
  c.side = 4;
  c.d = 8;
  c.rounds = 2;
  c.batch = 8;
  c.epochs = 1;
  return c;
}

}  // namespace

TEST_CASE("delta_con examples") {
  const SudokuKB kb(9, SudokuBackend::Sat);
  const Assignment x(81);
  auto board = pattern_board();
  REQUIRE(reference_con(board, 9) == 37);

  ReflectionVector none(81, 0);
  CHECK(delta_con(as_assignment(board), none, x, kb) == 0);

  std::swap(board[0], board[3]);
  const long before = reference_con(board, 9);
  auto blanked = board;
  blanked[0] = blanked[3] = 0;
  const long after = reference_con(blanked, 9);
  ReflectionVector r(81, 0);
  r[0] = r[3] = 1;
  CHECK(before == 23);
  CHECK(delta_con(as_assignment(board), r, x, kb) == after - before);
  CHECK(after - before == 14);

  const auto solved = as_assignment(pattern_board());
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ReflectionVector any(81, 0);
    for (auto& f : any) f = rng.uniform() < 0.3;
    any[static_cast<std::size_t>(trial)] = 1;
    CHECK(delta_con(solved, any, x, kb) == 0);
  }
}

TEST_CASE("delta_con agrees with the reference scorer on random flags") {
  const SudokuKB kb(9, SudokuBackend::Sat);
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> y(81);
    for (auto& v : y) v = 1 + static_cast<int>(rng.uniform() * 9.0) % 9;
    Assignment x(81);
    ReflectionVector r(81, 0);
    auto blanked = y;
    for (std::size_t i = 0; i < 81; ++i) {
      if (rng.uniform() < 0.2) {
        x.values[i] = y[i];
        x.clue[i] = 1;
      } else if (rng.uniform() < 0.3) {
        r[i] = 1;
        blanked[i] = 0;
      }
    }
    Assignment yhat = as_assignment(y);
    yhat.clue = x.clue;
    REQUIRE(delta_con(yhat, r, x, kb) == reference_con(blanked, 9) - reference_con(y, 9));
  }
}

TEST_CASE("loss_size examples and clamp") {
  ad::Tape tape;
  auto constant_probs = [&](double p, std::size_t n) {
    return tape.variable(ad::Matrix(n, 1, p));
  };
  CHECK(loss_size(constant_probs(0.3, 81), 0.8).item() == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(loss_size(constant_probs(0.1, 81), 0.8).item() == 0.0);
  CHECK(loss_size(constant_probs(1.0, 81), 0.8).item() == doctest::Approx(0.64).epsilon(1e-12));

  // Exactly zero whenever the mean flag probability is at most 1 - C.
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const double c = 0.05 + 0.9 * rng.uniform();
    std::vector<double> p(30);
    for (auto& v : p) v = rng.uniform();
    const double mean = std::accumulate(p.begin(), p.end(), 0.0) / 30.0;
    const double l = loss_size(tape.variable(ad::Matrix({30, 1}, p)), c).item();
    if (mean <= 1.0 - c) {
      CHECK(l == 0.0);
    } else {
      CHECK(l == doctest::Approx((mean - (1.0 - c)) * (mean - (1.0 - c))));
    }
  }
}

TEST_CASE("loss_labeled: uniform logits, large margins, and no reflection gradient") {
  ad::Tape tape;
  const std::vector<int> targets{0, 3, 8, 4};
  CHECK(loss_labeled(tape.variable(ad::Matrix(4, 9)), targets).item() ==
        doctest::Approx(std::log(9.0)).epsilon(1e-12));
  ad::Matrix sharp(4, 9);
  for (std::size_t i = 0; i < 4; ++i) sharp.at(i, static_cast<std::size_t>(targets[i])) = 50.0;
  CHECK(loss_labeled(tape.variable(sharp), targets).item() < 1e-18);

  const Instance inst = sudoku4(3);
  const ReflModel m(ModelConfig::sudoku(4, 8, 2), 9);
  ad::Tape t2;
  const auto bound = m.params().bind(t2);
  const auto nodes = m.forward(t2, bound, inst.symbols, *inst.adjacency);
  t2.backward(loss_labeled(nodes.cell_logits, truth_classes(inst, 1)));
  for (const char* name : {"refl_w", "refl_b"}) {
    for (double g : grads_of(m, bound, name)) CHECK(g == 0.0);
  }
  double body = 0.0;
  for (double g : grads_of(m, bound, "out_w")) body += std::abs(g);
  CHECK(body > 0.0);
}

TEST_CASE("loss_con: zero reward gives a zero gradient") {
  const Instance inst = sudoku4(4);
  const ReflModel m(ModelConfig::sudoku(4, 8, 2), 2);
  for (ConEstimator est : {ConEstimator::Reflection, ConEstimator::Joint}) {
    long delta = 0;
    {
      ad::Tape tape;
      const auto bound = m.params().bind(tape);
      const auto nodes = m.forward(tape, bound, inst.symbols, *inst.adjacency);
      delta = loss_con(tape, nodes, inst.x, *inst.kb, RewardBaseline{}, 1, 77, est).deltas[0];
    }
    RewardBaseline baseline;
    baseline.update(static_cast<double>(delta));
    ad::Tape tape;
    const auto bound = m.params().bind(tape);
    const auto nodes = m.forward(tape, bound, inst.symbols, *inst.adjacency);
    const auto s = loss_con(tape, nodes, inst.x, *inst.kb, baseline, 1, 77, est);
    CHECK(s.rewards[0] == 0.0);
    tape.backward(s.loss);
    for (const auto& e : m.params()) {
      for (double g : grads_of(m, bound, e.name)) CHECK(g == 0.0);
    }
  }
}

TEST_CASE("loss_con: a step along a positive reward raises the sample's log-probability") {
  const Instance inst = sudoku4(6);
  ReflModel m(ModelConfig::sudoku(4, 8, 2), 4);
  RewardBaseline baseline;
  baseline.update(-1.0);  // reward = delta + 1 > 0

  ad::Tape tape;
  const auto bound = m.params().bind(tape);
  const auto nodes = m.forward(tape, bound, inst.symbols, *inst.adjacency);
  const auto s = loss_con(tape, nodes, inst.x, *inst.kb, baseline, 1, 5);
  REQUIRE(s.rewards[0] > 0.0);
  const double before = reflection_log_prob(tape, nodes, s.decoded[0].r).item();
  tape.backward(s.loss);
  std::vector<std::vector<double>> step;
  for (const auto& e : m.params()) step.push_back(grads_of(m, bound, e.name));
  for (std::size_t k = 0; k < m.params().size(); ++k) {
    auto& v = m.params()[k].value.values;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= 1e-2 * step[k][j];
  }
  ad::Tape after_tape;
  const auto after_bound = m.params().bind(after_tape);
  const auto after_nodes = m.forward(after_tape, after_bound, inst.symbols, *inst.adjacency);
  CHECK(reflection_log_prob(after_tape, after_nodes, s.decoded[0].r).item() > before);
}

TEST_CASE("loss_con matches finite differences") {
  const Instance inst = sudoku4(8);
  const ReflModel m(ModelConfig::sudoku(4, 6, 2), 3);
  std::vector<ad::Matrix> inputs;
  for (const auto& e : m.params()) inputs.push_back(e.value);
  RewardBaseline baseline;
  baseline.update(2.5);
  for (ConEstimator est : {ConEstimator::Reflection, ConEstimator::Joint}) {
    for (int samples : {1, 3}) {
      const auto report = ad::finite_diff_check(
          [&](ad::Tape& tape, std::span<const ad::Tensor> params) {
            const auto nodes = m.forward(tape, params, inst.symbols, *inst.adjacency);
            return loss_con(tape, nodes, inst.x, *inst.kb, baseline, 1, 19, est, samples).loss;
          },
          inputs, 1e-5);
      CHECK(report.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("the reward enters the tape as an edgeless constant") {
  const Instance inst = sudoku4(9);
  const ReflModel m(ModelConfig::sudoku(4, 8, 2), 5);
  ad::Tape tape;
  const auto bound = m.params().bind(tape);
  const auto nodes = m.forward(tape, bound, inst.symbols, *inst.adjacency);
  RewardBaseline baseline;
  baseline.update(-3.0);
  const auto s = loss_con(tape, nodes, inst.x, *inst.kb, baseline, 1, 1);
  const auto& out = tape.node(s.loss.id());
  REQUIRE(out.inputs.size() == 2);
  const auto& reward = tape.node(out.inputs[1]);
  CHECK(reward.inputs.empty());
  CHECK_FALSE(reward.requires_grad);
  CHECK(static_cast<bool>(reward.backward) == false);
  const double scale = 1.0 / (static_cast<double>(inst.kb->max_points()) * 16.0);
  CHECK(reward.value[0] == doctest::Approx(-s.rewards[0] * scale));
  CHECK(s.rewards[0] == static_cast<double>(s.deltas[0]) + 3.0);
}

TEST_CASE("leave-one-out rewards sum to zero") {
  const Instance inst = sudoku4(10);
  const ReflModel m(ModelConfig::sudoku(4, 8, 2), 6);
  ad::Tape tape;
  const auto bound = m.params().bind(tape);
  const auto nodes = m.forward(tape, bound, inst.symbols, *inst.adjacency);
  const auto s = loss_con(tape, nodes, inst.x, *inst.kb, RewardBaseline{}, 1, 3,
                          ConEstimator::Reflection, 5);
  REQUIRE(s.deltas.size() == 5);
  const double total = std::accumulate(s.rewards.begin(), s.rewards.end(), 0.0);
  CHECK(std::abs(total) < 1e-12);
  const long sum = std::accumulate(s.deltas.begin(), s.deltas.end(), 0L);
  CHECK(s.rewards[0] == doctest::Approx(static_cast<double>(s.deltas[0]) -
                                        static_cast<double>(sum - s.deltas[0]) / 4.0));
}

// Score-function estimates of d E[delta] / d theta against central differences
// of the expectation computed by enumerating every outcome (|Y| = 2, n = 4).
TEST_CASE("REINFORCE estimator is unbiased on a four-node graph") {
  Graph path(4);
  path.add_edge(0, 1);
  path.add_edge(1, 2);
  path.add_edge(2, 3);
  const auto inst = graph_instances({path}, TaskKind::Clique)[0];
  ReflModel m(ModelConfig::graph(TaskKind::Clique, 4, 1), 12);
  // Put every node in the argmax set so the output is inconsistent.
  m.params()[m.params().index_of("out_b")].value = ad::Matrix({1, 2}, {-1.0, 1.0});

  Rng dir_rng(99);
  std::vector<std::vector<double>> direction;
  for (const auto& e : m.params()) {
    std::vector<double> v(e.value.values.size());
    for (auto& x : v) x = dir_rng.uniform() * 2.0 - 1.0;
    direction.push_back(v);
  }

  auto expected_delta = [&](const ReflModel& model, ConEstimator est) {
    const auto fr = model.forward(inst.symbols, *inst.adjacency);
    const auto greedy = decode(fr, DecodeMode::Argmax);
    double total = 0.0;
    for (int ymask = 0; ymask < 16; ++ymask) {
      Assignment y(4);
      double py = 1.0;
      for (std::size_t i = 0; i < 4; ++i) {
        y.values[i] = (ymask >> i) & 1;
        py *= fr.cell_probs.at(i, static_cast<std::size_t>(y.values[i]));
      }
      if (est == ConEstimator::Reflection) {
        if (y.values != greedy.yhat.values) continue;
        py = 1.0;
      }
      for (int rmask = 0; rmask < 16; ++rmask) {
        ReflectionVector r(4);
        double pr = 1.0;
        for (std::size_t i = 0; i < 4; ++i) {
          r[i] = (rmask >> i) & 1;
          pr *= r[i] ? fr.flag_probs[i] : 1.0 - fr.flag_probs[i];
        }
        total += py * pr * static_cast<double>(delta_con(y, r, inst.x, *inst.kb));
      }
    }
    return total;
  };

  const double scale = 1.0 / (static_cast<double>(inst.kb->max_points()) * 4.0);
  for (ConEstimator est : {ConEstimator::Reflection, ConEstimator::Joint}) {
    CAPTURE(to_string(est));
    const double h = 1e-5;
    ReflModel plus = m, minus = m;
    for (std::size_t k = 0; k < m.params().size(); ++k) {
      for (std::size_t j = 0; j < direction[k].size(); ++j) {
        plus.params()[k].value.values[j] += h * direction[k][j];
        minus.params()[k].value.values[j] -= h * direction[k][j];
      }
    }
    const double fd = (expected_delta(plus, est) - expected_delta(minus, est)) / (2.0 * h);

    const int draws = 4000;
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < draws; ++s) {
      ad::Tape tape;
      const auto bound = m.params().bind(tape);
      const auto nodes = m.forward(tape, bound, inst.symbols, *inst.adjacency);
      const auto sample = loss_con(tape, nodes, inst.x, *inst.kb, RewardBaseline{}, 0,
                                   static_cast<std::uint64_t>(s) + 1, est);
      tape.backward(sample.loss);
      double dd = 0.0;
      for (std::size_t k = 0; k < m.params().size(); ++k) {
        const auto g = grads_of(m, bound, m.params()[k].name);
        for (std::size_t j = 0; j < g.size(); ++j) dd += g[j] * direction[k][j];
      }
      const double estimate = -dd / scale;
      sum += estimate;
      sum_sq += estimate * estimate;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
    CAPTURE(mean);
    CAPTURE(fd);
    CAPTURE(se);
    CHECK(std::abs(fd) > 3.0 * se);  // the check has something to detect
    CHECK(std::abs(mean - fd) <= 3.0 * se);
  }
}

TEST_CASE("total_loss: alpha = beta = 0 is the supervised loss") {
  std::vector<Instance> insts;
  for (std::uint64_t s = 20; s < 24; ++s) insts.push_back(sudoku4(s));
  std::vector<const Instance*> batch;
  for (const auto& i : insts) batch.push_back(&i);
  const ReflModel m(ModelConfig::sudoku(4, 8, 2), 1);
  TrainConfig c = small_config();
  c.alpha = c.beta = 0.0;
  const auto l = total_loss(m, batch, c, RewardBaseline{}, 1, nullptr);
  double direct = 0.0;
  for (const auto& inst : insts) {
    ad::Tape tape;
    const auto bound = m.params().bind(tape);
    const auto nodes = m.forward(tape, bound, inst.symbols, *inst.adjacency);
    direct += loss_labeled(nodes.cell_logits, truth_classes(inst, 1)).item() / 4.0;
  }
  CHECK(l.total == doctest::Approx(direct).epsilon(1e-12));
  CHECK(l.labeled == doctest::Approx(direct).epsilon(1e-12));
  CHECK(l.labeled_count == 4);
}

TEST_CASE("total_loss: unlabeled-only batch") {
  std::vector<Instance> insts;
  for (std::uint64_t s = 30; s < 33; ++s) {
    insts.push_back(sudoku4(s));
    insts.back().labeled = false;
  }
  std::vector<const Instance*> batch;
  for (const auto& i : insts) batch.push_back(&i);
  const ReflModel m(ModelConfig::sudoku(4, 8, 2), 1);
  Gradients g;
  const auto l = total_loss(m, batch, small_config(), RewardBaseline{}, 2, &g);
  CHECK(l.labeled_count == 0);
  CHECK(l.labeled == 0.0);
  CHECK(std::isfinite(l.total));
  CHECK(l.total == doctest::Approx(l.con + l.size).epsilon(1e-12));
  // Only the consistency and size terms reach the output head, so it gets nothing.
  for (double v : g.values[m.params().index_of("out_w")]) CHECK(v == 0.0);
}

TEST_CASE("total_loss: reproducible and independent of the worker count") {
  std::vector<Instance> insts;
  for (std::uint64_t s = 40; s < 48; ++s) insts.push_back(sudoku4(s));
  insts[1].labeled = insts[5].labeled = false;
  std::vector<const Instance*> batch;
  for (const auto& i : insts) batch.push_back(&i);
  const ReflModel m(ModelConfig::sudoku(4, 8, 2), 1);
  TrainConfig c = small_config();
  c.samples = 2;
  Gradients g1, g2, g3;
  c.workers = 1;
  const auto a = total_loss(m, batch, c, RewardBaseline{}, 7, &g1);
  const auto b = total_loss(m, batch, c, RewardBaseline{}, 7, &g2);
  c.workers = 4;
  const auto d = total_loss(m, batch, c, RewardBaseline{}, 7, &g3);
  CHECK(a.total == b.total);
  CHECK(a.total == d.total);
  CHECK(a.deltas == d.deltas);
  CHECK(a.deltas.size() == 16);
  CHECK(g1.values == g2.values);
  CHECK(g1.values == g3.values);
}

TEST_CASE("RewardBaseline") {
  RewardBaseline b;
  b.update(4.0);
  CHECK(b.value == 4.0);
  b.update(14.0);
  CHECK(b.value == doctest::Approx(4.1));
  CHECK(b.initialized);
}

TEST_CASE("config parsing") {
  std::istringstream good(
      "# comment\n task = sudoku\nside=9\nalpha = 2.5 # trailing\nc = 0.6\nseed = 42\n"
      "con_estimator = joint\nsamples = 4\n");
  const auto c = TrainConfig::parse(good);
  CHECK(c.side == 9);
  CHECK(c.alpha == 2.5);
  CHECK(c.c == 0.6);
  CHECK(c.seed == 42);
  CHECK(c.con_estimator == ConEstimator::Joint);
  CHECK(c.samples == 4);
  CHECK(c.beta == 1.0);
  CHECK(c.d == 96);

  std::istringstream graph("task = clique\n");
  CHECK(TrainConfig::parse(graph).d == 64);
  std::istringstream wide("task = mis\nd = 16\n");
  CHECK(TrainConfig::parse(wide).d == 16);

  std::istringstream bad("side = nine\nfoo = 1\nnot a pair\nseed = -3\n");
  try {
    TrainConfig::parse(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("unknown key 'foo'") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("line 4") != std::string::npos);
  }

  TrainConfig v;
  v.c = 1.0;
  v.alpha = -1.0;
  v.samples = 0;
  try {
    v.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("c must") != std::string::npos);
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("samples") != std::string::npos);
    CHECK(msg.find("train_data is required") != std::string::npos);
  }

  TrainConfig round;
  round.d = 33;
  round.lr = 0.0025;
  round.train_data = "a.csv";
  std::istringstream text(round.to_text());
  const auto back = TrainConfig::parse(text);
  CHECK(back.d == 33);
  CHECK(back.lr == 0.0025);
  CHECK(back.train_data == "a.csv");
}

TEST_CASE("label assignment") {
  std::vector<Instance> insts(10);
  assign_labels(insts, 0.25, 3);
  std::size_t labeled = 0;
  for (const auto& i : insts) labeled += i.labeled;
  CHECK(labeled == 3);
  assign_labels(insts, 0.0, 3);
  for (const auto& i : insts) CHECK_FALSE(i.labeled);
}

TEST_CASE("train: same seed gives identical epochs") {
  const auto insts = sudoku_instances(generate_sudoku(4, 6, 48, 2), SudokuBackend::Sat);
  const std::vector<Instance> train_set(insts.begin(), insts.begin() + 40);
  const std::vector<Instance> val_set(insts.begin() + 40, insts.end());
  TrainConfig c = small_config();
  c.epochs = 2;
  const auto a = train(c, train_set, val_set);
  const auto b = train(c, train_set, val_set);
  REQUIRE(a.history.size() == 2);
  CHECK(a.history[0].loss == b.history[0].loss);
  CHECK(a.history[1].loss == b.history[1].loss);
  CHECK(a.history[1].validation.correct == b.history[1].validation.correct);
  c.seed = 2;
  CHECK(train(c, train_set, val_set).history[0].loss != a.history[0].loss);
}

TEST_CASE("train: a runaway learning rate aborts with diagnostics") {
  const auto insts = sudoku_instances(generate_sudoku(4, 6, 40, 3), SudokuBackend::Sat);
  TrainConfig c = small_config();
  c.lr = 1e300;
  c.epochs = 3;
  CHECK_THROWS_AS(train(c, insts, {}), TrainingError);
}
