#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflx/assignment.hpp"
#include "reflx/graph.hpp"

namespace reflx {

// Puzzle and solution as digit strings; '0' marks a blank in the puzzle.
struct SudokuRecord {
  std::string puzzle;
  std::string solution;

  int side() const;
  Assignment puzzle_assignment() const;    // clue mask set on non-'0' cells
  Assignment solution_assignment() const;  // clue mask copied from the puzzle
  bool operator==(const SudokuRecord&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::vector<std::size_t> rows)
      : std::runtime_error(what), rows_(std::move(rows)) {}
  const std::vector<std::size_t>& rows() const { return rows_; }

 private:
  std::vector<std::size_t> rows_;
};

// Empty string when valid, otherwise a reason.
std::string validate_record(const SudokuRecord& r);

// Header "quizzes,solutions"; one puzzle,solution pair per row. Invalid rows
// are collected and reported together (1-based line numbers).
std::vector<SudokuRecord> parse_sudoku_csv(std::istream& in);
std::vector<SudokuRecord> load_sudoku_csv(const std::filesystem::path& path);
void write_sudoku_csv(std::ostream& out, const std::vector<SudokuRecord>& records);
void write_sudoku_csv(const std::filesystem::path& path, const std::vector<SudokuRecord>& records);

// Uniquely solvable puzzles with exactly `clue_count` clues. 4x4 uniqueness is
// checked by exhaustive enumeration, 9x9 by SAT model counting up to 2.
// Deterministic per (side, clue_count, count, seed).
std::vector<SudokuRecord> generate_sudoku(int side, int clue_count, std::size_t count,
                                          std::uint64_t seed);

// G(n, p): each pair independently an edge with probability p.
Graph generate_random_graph(std::size_t n, double p, std::uint64_t seed);

// Edge-list format: "n m" then m lines "u v" (0-indexed). A dataset file is a
// concatenation of such blocks.
Graph read_edge_list(std::istream& in);
void write_edge_list(std::ostream& out, const Graph& g);
std::vector<Graph> read_graph_dataset(const std::filesystem::path& path);
void write_graph_dataset(const std::filesystem::path& path, const std::vector<Graph>& graphs);

// FNV-1a 64 over the file bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

// Writes "<data>.manifest.json" with generator parameters, seed and checksum.
void write_manifest(const std::filesystem::path& data_path, const std::string& generator,
                    std::uint64_t seed, const std::string& parameters_json);

}  // namespace reflx
