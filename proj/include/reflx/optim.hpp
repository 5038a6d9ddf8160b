#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reflx/autodiff.hpp"

namespace reflx {

class Rng;

// Named parameters with Adam moment accumulators.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    ad::Matrix value;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
  };

  // Throws if `name` is already registered.
  std::size_t add(std::string name, ad::Matrix initial);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] with fan_in = rows.
  std::size_t add_uniform(std::string name, std::size_t rows, std::size_t cols, Rng& rng);
  std::size_t add_zeros(std::string name, std::size_t rows, std::size_t cols);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  std::size_t index_of(const std::string& name) const;
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  // Leaf tensors on `tape` mirroring every parameter, in registration order.
  std::vector<ad::Tensor> bind(ad::Tape& tape) const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> by_name_;
  std::uint64_t step_ = 0;
};

// Gradient buffers aligned with a ParameterSet.
struct Gradients {
  std::vector<std::vector<double>> values;

  static Gradients zeros_like(const ParameterSet& params);
  // Adds the grads of `bound` (from ParameterSet::bind) scaled by `weight`.
  void accumulate(std::span<const ad::Tensor> bound, double weight = 1.0);
  void add(const Gradients& other);
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam step. Throws std::runtime_error naming the first
// parameter with a non-finite gradient; parameters are untouched in that case.
void adam_update(ParameterSet& params, const Gradients& grads, const AdamOptions& options);

// ---- checkpoint -------------------------------------------------------------

// File layout: "REFLX1\n", one "arch ..." line, "params <count>\n", then per
// parameter a "<name> <rows> <cols>\n" header followed by rows*cols
// little-endian IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const std::string& arch_line,
                     const ParameterSet& params);

struct CheckpointContents {
  std::string arch_line;
  std::vector<std::pair<std::string, ad::Matrix>> tensors;
};
CheckpointContents read_checkpoint(const std::filesystem::path& path);

// Copies checkpoint tensors into `params`; every name and shape must match.
void load_into(const CheckpointContents& contents, ParameterSet& params);

}  // namespace reflx
