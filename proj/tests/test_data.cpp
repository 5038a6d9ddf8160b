#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "reflx/data.hpp"
#include "reflx/knowledge.hpp"
#include "reflx/oracles.hpp"

using namespace reflx;

namespace {

// Plain backtracking over 4x4 cells, written independently of the oracle.
void count_grids(std::array<int, 16>& g, int cell, std::size_t& n) {
  if (cell == 16) {
    ++n;
    return;
  }
  const int r = cell / 4, c = cell % 4;
  for (int d = 1; d <= 4; ++d) {
    bool ok = true;
    for (int k = 0; k < cell && ok; ++k) {
      const int kr = k / 4, kc = k % 4;
      const bool peer = kr == r || kc == c || (kr / 2 == r / 2 && kc / 2 == c / 2);
      ok = !(peer && g[static_cast<std::size_t>(k)] == d);
    }
    if (!ok) continue;
    g[static_cast<std::size_t>(cell)] = d;
    count_grids(g, cell + 1, n);
  }
}

const char* kSolution4 = "1234341221434321";

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("reflx_test_" + name);
}

}  // namespace

TEST_CASE("the 4x4 grid list has 288 distinct valid boards") {
  std::array<int, 16> g{};
  std::size_t n = 0;
  count_grids(g, 0, n);
  CHECK(n == 288);
  const auto& all = oracle::all_4x4_grids();
  CHECK(all.size() == 288);
  CHECK(std::set<oracle::Grid4>(all.begin(), all.end()).size() == 288);
  for (const auto& grid : all) CHECK(oracle::sudoku_rules_hold({grid.begin(), grid.end()}, 4));
}

TEST_CASE("exhaustive 4x4 enumeration") {
  CHECK(oracle::solve_sudoku_exhaustive(Assignment(16)).size() == 288);
  Assignment bad(16);
  bad.values[0] = 1;
  bad.values[1] = 1;
  CHECK(oracle::solve_sudoku_exhaustive(bad).empty());
  const auto recs = generate_sudoku(4, 6, 10, 3);
  for (const auto& r : recs) {
    const auto all = oracle::solve_sudoku_exhaustive(r.puzzle_assignment());
    REQUIRE(all.size() == 1);
    for (std::size_t i = 0; i < 16; ++i) CHECK(all[0][i] == r.solution[i] - '0');
  }
}

TEST_CASE("clique / MIS oracles") {
  Graph tri(3);
  tri.add_edge(0, 1);
  tri.add_edge(1, 2);
  tri.add_edge(0, 2);
  CHECK(oracle::max_clique(tri).size() == 3);
  Graph path(3);
  path.add_edge(0, 1);
  path.add_edge(1, 2);
  auto mis = oracle::max_independent_set(path);
  std::sort(mis.begin(), mis.end());
  CHECK(mis == std::vector<int>{0, 2});
  CHECK(oracle::max_clique(Graph(5)).size() == 1);
  CHECK_THROWS(oracle::max_clique(Graph(41)));
  CHECK_THROWS(oracle::max_clique_exhaustive(Graph(17)));
}

TEST_CASE("Bron-Kerbosch equals exhaustive subsets on 100 graphs with n = 14") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Graph g = generate_random_graph(14, 0.5, seed);
    REQUIRE(oracle::max_clique(g).size() == oracle::max_clique_exhaustive(g).size());
    REQUIRE(oracle::max_independent_set(g).size() == oracle::max_independent_set_exhaustive(g).size());
  }
}

TEST_CASE("CSV: well-formed two rows") {
  std::istringstream in(std::string("quizzes,solutions\n") + "1000000000000000," + kSolution4 +
                        "\n0200000000000000," + kSolution4 + "\n");
  const auto recs = parse_sudoku_csv(in);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].side() == 4);
  CHECK(recs[1].puzzle_assignment().values[1] == 2);
  CHECK(recs[1].puzzle_assignment().clue_count() == 1);
  CHECK(recs[1].solution_assignment().values[15] == 1);
}

TEST_CASE("CSV: bad rows are rejected with their line numbers") {
  // Line 2: the solution repeats a digit in its first row. Line 4: clue disagrees.
  std::istringstream in(std::string("quizzes,solutions\n") + "0000000000000000,1134341221434321\n" +
                        "0000000000000000," + kSolution4 + "\n" + "4000000000000000," + kSolution4 +
                        "\nnot a row\n");
  try {
    parse_sudoku_csv(in);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(e.rows() == std::vector<std::size_t>{2, 4, 5});
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream header("puzzle,solution\n");
  CHECK_THROWS_AS(parse_sudoku_csv(header), DatasetError);
}

TEST_CASE("CSV: write then read is the identity") {
  const auto recs = generate_sudoku(4, 5, 25, 9);
  const auto path = temp_file("roundtrip.csv");
  write_sudoku_csv(path, recs);
  CHECK(load_sudoku_csv(path) == recs);
  std::filesystem::remove(path);
}

TEST_CASE("generate_sudoku: 4x4 with 6 clues is uniquely solvable") {
  const auto recs = generate_sudoku(4, 6, 200, 42);
  REQUIRE(recs.size() == 200);
  for (const auto& r : recs) {
    CHECK(validate_record(r).empty());
    CHECK(r.puzzle_assignment().clue_count() == 6);
    CHECK(oracle::solve_sudoku_exhaustive(r.puzzle_assignment()).size() == 1);
    CHECK(count_sudoku_completions(r.puzzle_assignment(), SudokuBackend::Csp, 4, 2) == 1);
  }
}

TEST_CASE("generate_sudoku: deterministic per seed") {
  CHECK(generate_sudoku(4, 6, 50, 7) == generate_sudoku(4, 6, 50, 7));
  CHECK_FALSE(generate_sudoku(4, 6, 50, 7) == generate_sudoku(4, 6, 50, 8));
  CHECK(generate_sudoku(9, 40, 3, 7) == generate_sudoku(9, 40, 3, 7));
}

TEST_CASE("generate_sudoku: 9x9 puzzles are uniquely solvable") {
  for (const auto& r : generate_sudoku(9, 34, 4, 5)) {
    CHECK(validate_record(r).empty());
    CHECK(r.puzzle_assignment().clue_count() == 34);
    CHECK(count_sudoku_completions(r.puzzle_assignment(), SudokuBackend::Csp, 9, 2) == 1);
  }
}

TEST_CASE("generate_sudoku: infeasible or out-of-range clue counts") {
  CHECK_THROWS(generate_sudoku(4, 0, 1, 1));  // 288 completions
  CHECK_THROWS(generate_sudoku(4, 2, 1, 1));
  CHECK_THROWS(generate_sudoku(4, 16, 1, 1));
  CHECK_THROWS(generate_sudoku(4, -1, 1, 1));
  CHECK_THROWS(generate_sudoku(5, 3, 1, 1));
}

TEST_CASE("random graphs") {
  CHECK(generate_random_graph(10, 0.0, 1).edge_count() == 0);
  CHECK(generate_random_graph(10, 1.0, 1).edge_count() == 45);
  CHECK(generate_random_graph(20, 0.5, 3) == generate_random_graph(20, 0.5, 3));
  CHECK_THROWS(generate_random_graph(0, 0.5, 1));
  CHECK_THROWS(generate_random_graph(5, 1.5, 1));
  // Edge frequency is close to p over many pairs.
  std::size_t edges = 0;
  for (std::uint64_t s = 0; s < 50; ++s) edges += generate_random_graph(20, 0.3, s).edge_count();
  CHECK(static_cast<double>(edges) / (50.0 * 190.0) == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("edge lists and graph datasets") {
  std::istringstream in("3 2\n0 1\n1 2\n");
  const Graph g = read_edge_list(in);
  CHECK(g.node_count() == 3);
  CHECK(g.has_edge(2, 1));
  std::istringstream loop("2 1\n1 1\n");
  CHECK_THROWS(read_edge_list(loop));
  std::istringstream dup("2 2\n0 1\n1 0\n");
  CHECK_THROWS(read_edge_list(dup));
  std::istringstream short_list("3 2\n0 1\n");
  CHECK_THROWS(read_edge_list(short_list));

  std::vector<Graph> graphs;
  for (std::uint64_t s = 0; s < 5; ++s) graphs.push_back(generate_random_graph(6 + s, 0.4, s));
  graphs.push_back(Graph(1));
  const auto path = temp_file("graphs.txt");
  write_graph_dataset(path, graphs);
  CHECK(read_graph_dataset(path) == graphs);
  std::filesystem::remove(path);
}

TEST_CASE("manifest carries seed, parameters and checksum") {
  const auto path = temp_file("manifest.csv");
  write_sudoku_csv(path, generate_sudoku(4, 6, 5, 1));
  write_manifest(path, "generate-sudoku", 1, R"({"side":4,"clues":6,"count":5})");
  std::ifstream in(path.string() + ".manifest.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["seed"] == 1);
  CHECK(j["parameters"]["clues"] == 6);
  CHECK(j["checksum_fnv1a64"] == file_checksum(path));
  CHECK(file_checksum(path).size() == 16);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".manifest.json");
}

TEST_CASE("FNV-1a of known bytes") {
  const auto path = temp_file("fnv.txt");
  std::ofstream(path, std::ios::binary) << "a";
  CHECK(file_checksum(path) == "af63dc4c8601ec8c");
  std::ofstream(path, std::ios::binary | std::ios::trunc);
  CHECK(file_checksum(path) == "cbf29ce484222325");
  std::filesystem::remove(path);
}
