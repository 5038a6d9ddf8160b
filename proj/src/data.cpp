#include "reflx/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "reflx/knowledge.hpp"
#include "reflx/oracles.hpp"
#include "reflx/rng.hpp"

namespace reflx {

namespace {

int side_for_length(std::size_t len) {
  if (len == 16) return 4;
  if (len == 81) return 9;
  return 0;
}

bool all_digits(const std::string& s, char lo, char hi) {
  for (char c : s) {
    if (c < lo || c > hi) return false;
  }
  return true;
}

}  // namespace

int SudokuRecord::side() const { return side_for_length(puzzle.size()); }

Assignment SudokuRecord::puzzle_assignment() const {
  Assignment a(puzzle.size());
  for (std::size_t i = 0; i < puzzle.size(); ++i) {
    if (puzzle[i] != '0') {
      a.values[i] = puzzle[i] - '0';
      a.clue[i] = 1;
    }
  }
  return a;
}

Assignment SudokuRecord::solution_assignment() const {
  Assignment a = puzzle_assignment();
  for (std::size_t i = 0; i < solution.size(); ++i) a.values[i] = solution[i] - '0';
  return a;
}

std::string validate_record(const SudokuRecord& r) {
  const int side = side_for_length(r.puzzle.size());
  if (side == 0) return "puzzle length " + std::to_string(r.puzzle.size()) + " is not 16 or 81";
  if (r.solution.size() != r.puzzle.size()) return "solution length differs from puzzle";
  const char hi = static_cast<char>('0' + side);
  if (!all_digits(r.puzzle, '0', hi)) return "puzzle holds a character outside 0-" + std::string(1, hi);
  if (!all_digits(r.solution, '1', hi)) return "solution holds a character outside 1-" + std::string(1, hi);
  std::vector<int> digits;
  for (char c : r.solution) digits.push_back(c - '0');
  if (!oracle::sudoku_rules_hold(digits, side)) return "solution violates a Sudoku rule";
  for (std::size_t i = 0; i < r.puzzle.size(); ++i) {
    if (r.puzzle[i] != '0' && r.puzzle[i] != r.solution[i]) {
      return "clue at cell " + std::to_string(i) + " disagrees with the solution";
    }
  }
  return {};
}

std::vector<SudokuRecord> parse_sudoku_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DatasetError("empty Sudoku CSV", {});
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "quizzes,solutions") {
    throw DatasetError("Sudoku CSV header must be 'quizzes,solutions', got '" + line + "'", {1});
  }
  std::vector<SudokuRecord> out;
  std::vector<std::size_t> bad;
  std::string detail;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    SudokuRecord r;
    std::string why;
    if (comma == std::string::npos) {
      why = "missing comma";
    } else {
      r.puzzle = line.substr(0, comma);
      r.solution = line.substr(comma + 1);
      why = validate_record(r);
    }
    if (!why.empty()) {
      bad.push_back(line_no);
      if (bad.size() <= 5) detail += "\n  line " + std::to_string(line_no) + ": " + why;
      continue;
    }
    out.push_back(std::move(r));
  }
  if (!bad.empty()) {
    throw DatasetError("Sudoku CSV has " + std::to_string(bad.size()) + " invalid row(s):" + detail,
                       std::move(bad));
  }
  return out;
}

std::vector<SudokuRecord> load_sudoku_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string(), {});
  return parse_sudoku_csv(in);
}

void write_sudoku_csv(std::ostream& out, const std::vector<SudokuRecord>& records) {
  out << "quizzes,solutions\n";
  for (const auto& r : records) out << r.puzzle << "," << r.solution << "\n";
}

void write_sudoku_csv(const std::filesystem::path& path, const std::vector<SudokuRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_sudoku_csv(out, records);
}

// ---- generation ----------------------------------------------------------------

namespace {

bool fill_random(std::vector<int>& grid, std::size_t cell, int side, Rng& rng) {
  if (cell == grid.size()) return true;
  const int box = side == 4 ? 2 : 3;
  const int r = static_cast<int>(cell) / side, c = static_cast<int>(cell) % side;
  std::vector<int> digits(static_cast<std::size_t>(side));
  for (int d = 0; d < side; ++d) digits[static_cast<std::size_t>(d)] = d + 1;
  rng.shuffle(digits);
  for (int d : digits) {
    bool ok = true;
    for (int k = 0; k < side && ok; ++k) {
      if (grid[static_cast<std::size_t>(r * side + k)] == d) ok = false;
      if (grid[static_cast<std::size_t>(k * side + c)] == d) ok = false;
      const int br = r / box * box + k / box, bc = c / box * box + k % box;
      if (grid[static_cast<std::size_t>(br * side + bc)] == d) ok = false;
    }
    if (!ok) continue;
    grid[cell] = d;
    if (fill_random(grid, cell + 1, side, rng)) return true;
    grid[cell] = 0;
  }
  return false;
}

bool unique_completion(const Assignment& puzzle, int side) {
  if (side == 4) return oracle::solve_sudoku_exhaustive(puzzle).size() == 1;
  return count_sudoku_completions(puzzle, SudokuBackend::Sat, side, 2) == 1;
}

// True when the peers of blank cell i rule out every digit but one. Blanking
// such a cell cannot add a completion, so the counting check can be skipped.
bool forced_by_peers(const Assignment& puzzle, std::size_t i, int side) {
  const int box = side == 4 ? 2 : 3;
  const int r = static_cast<int>(i) / side, c = static_cast<int>(i) % side;
  std::vector<char> seen(static_cast<std::size_t>(side) + 1, 0);
  for (int k = 0; k < side; ++k) {
    const int br = r / box * box + k / box, bc = c / box * box + k % box;
    for (int cell : {r * side + k, k * side + c, br * side + bc}) {
      const int v = puzzle.values[static_cast<std::size_t>(cell)];
      if (static_cast<std::size_t>(cell) != i && v != kBlank) seen[static_cast<std::size_t>(v)] = 1;
    }
  }
  int open = 0;
  for (int d = 1; d <= side; ++d) open += seen[static_cast<std::size_t>(d)] ? 0 : 1;
  return open == 1;
}

constexpr int kGenerationAttempts = 40;

}  // namespace

std::vector<SudokuRecord> generate_sudoku(int side, int clue_count, std::size_t count,
                                          std::uint64_t seed) {
  if (side != 4 && side != 9) throw std::invalid_argument("generate_sudoku: side must be 4 or 9");
  const int cells = side * side;
  if (clue_count < 0 || clue_count >= cells) {
    throw std::invalid_argument("generate_sudoku: clue_count must be in [0, " +
                                std::to_string(cells) + ")");
  }
  std::vector<SudokuRecord> out(count);
  std::vector<std::uint8_t> failed(count, 0);
  const auto total = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic, 4)
  for (long idx = 0; idx < total; ++idx) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(idx), static_cast<std::uint64_t>(side * 100 + clue_count)));
    bool done = false;
    for (int attempt = 0; attempt < kGenerationAttempts && !done; ++attempt) {
      std::vector<int> grid(static_cast<std::size_t>(cells), 0);
      if (side == 4) {
        const auto& all = oracle::all_4x4_grids();
        const auto& g = all[rng.index(all.size())];
        grid.assign(g.begin(), g.end());
      } else {
        fill_random(grid, 0, side, rng);
      }
      Assignment puzzle(static_cast<std::size_t>(cells));
      for (int c = 0; c < cells; ++c) {
        puzzle.values[static_cast<std::size_t>(c)] = grid[static_cast<std::size_t>(c)];
        puzzle.clue[static_cast<std::size_t>(c)] = 1;
      }
      std::vector<int> order(static_cast<std::size_t>(cells));
      for (int c = 0; c < cells; ++c) order[static_cast<std::size_t>(c)] = c;
      rng.shuffle(order);
      int clues = cells;
      for (int c : order) {
        if (clues == clue_count) break;
        const auto i = static_cast<std::size_t>(c);
        puzzle.values[i] = kBlank;
        puzzle.clue[i] = 0;
        if (forced_by_peers(puzzle, i, side) || unique_completion(puzzle, side)) {
          --clues;
        } else {
          puzzle.values[i] = grid[i];
          puzzle.clue[i] = 1;
        }
      }
      if (clues != clue_count || !unique_completion(puzzle, side)) continue;
      SudokuRecord r;
      for (int c = 0; c < cells; ++c) {
        const int v = puzzle.values[static_cast<std::size_t>(c)];
        r.puzzle.push_back(static_cast<char>('0' + (v == kBlank ? 0 : v)));
        r.solution.push_back(static_cast<char>('0' + grid[static_cast<std::size_t>(c)]));
      }
      out[static_cast<std::size_t>(idx)] = std::move(r);
      done = true;
    }
    if (!done) failed[static_cast<std::size_t>(idx)] = 1;
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (failed[i]) {
      throw std::runtime_error("generate_sudoku: no uniquely solvable " + std::to_string(side) +
                               "x" + std::to_string(side) + " puzzle with " +
                               std::to_string(clue_count) + " clues found within " +
                               std::to_string(kGenerationAttempts) + " attempts");
    }
  }
  return out;
}

Graph generate_random_graph(std::size_t n, double p, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_random_graph: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("generate_random_graph: p outside [0,1]");
  Rng rng(seed);
  Graph g(n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (rng.uniform() < p) g.add_edge(static_cast<int>(u), static_cast<int>(v));
    }
  }
  return g;
}

// ---- edge lists -----------------------------------------------------------------

Graph read_edge_list(std::istream& in) {
  std::size_t n = 0, m = 0;
  if (!(in >> n >> m)) throw std::runtime_error("edge list: missing 'n m' header");
  std::vector<std::pair<int, int>> edges;
  edges.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    int u = 0, v = 0;
    if (!(in >> u >> v)) {
      throw std::runtime_error("edge list: expected " + std::to_string(m) + " edges, read " +
                               std::to_string(k));
    }
    edges.emplace_back(u, v);
  }
  return Graph::from_edges(n, edges);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  out << g.node_count() << " " << g.edge_count() << "\n";
  for (auto [u, v] : g.edges()) out << u << " " << v << "\n";
}

std::vector<Graph> read_graph_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Graph> out;
  for (;;) {
    in >> std::ws;
    if (in.eof()) break;
    out.push_back(read_edge_list(in));
  }
  return out;
}

void write_graph_dataset(const std::filesystem::path& path, const std::vector<Graph>& graphs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& g : graphs) write_edge_list(out, g);
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_manifest(const std::filesystem::path& data_path, const std::string& generator,
                    std::uint64_t seed, const std::string& parameters_json) {
  nlohmann::json j;
  j["file"] = data_path.filename().string();
  j["generator"] = generator;
  j["seed"] = seed;
  j["parameters"] = nlohmann::json::parse(parameters_json);
  j["checksum_fnv1a64"] = file_checksum(data_path);
  std::ofstream out(data_path.string() + ".manifest.json");
  out << j.dump(2) << "\n";
}

}  // namespace reflx
