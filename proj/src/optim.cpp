#include "reflx/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "reflx/rng.hpp"

namespace reflx {

std::size_t ParameterSet::add(std::string name, ad::Matrix initial) {
  if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const std::size_t n = initial.values.size();
  by_name_.emplace(name, entries_.size());
  entries_.push_back(Entry{std::move(name), std::move(initial), std::vector<double>(n, 0.0),
                           std::vector<double>(n, 0.0)});
  return entries_.size() - 1;
}

std::size_t ParameterSet::add_uniform(std::string name, std::size_t rows, std::size_t cols,
                                      Rng& rng) {
  ad::Matrix m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : m.values) v = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(m));
}

std::size_t ParameterSet::add_zeros(std::string name, std::size_t rows, std::size_t cols) {
  return add(std::move(name), ad::Matrix(rows, cols));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.value.values.size();
  return total;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::vector<ad::Tensor> ParameterSet::bind(ad::Tape& tape) const {
  std::vector<ad::Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(tape.variable(e.value));
  return out;
}

Gradients Gradients::zeros_like(const ParameterSet& params) {
  Gradients g;
  for (const auto& e : params) g.values.emplace_back(e.value.values.size(), 0.0);
  return g;
}

void Gradients::accumulate(std::span<const ad::Tensor> bound, double weight) {
  if (bound.size() != values.size()) throw std::invalid_argument("Gradients: size mismatch");
  for (std::size_t k = 0; k < bound.size(); ++k) {
    auto g = bound[k].grad();
    if (g.empty()) continue;
    for (std::size_t i = 0; i < g.size(); ++i) values[k][i] += weight * g[i];
  }
}

void Gradients::add(const Gradients& other) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    for (std::size_t i = 0; i < values[k].size(); ++i) values[k][i] += other.values[k][i];
  }
}

void adam_update(ParameterSet& params, const Gradients& grads, const AdamOptions& options) {
  if (grads.values.size() != params.size()) {
    throw std::invalid_argument("adam_update: gradient count does not match parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads.values[k].size() != params[k].value.values.size()) {
      throw std::invalid_argument("adam_update: gradient shape mismatch for " + params[k].name);
    }
    for (double g : grads.values[k]) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam_update: non-finite gradient for parameter " +
                                 params[k].name);
      }
    }
  }
  params.set_step(params.step() + 1);
  const double t = static_cast<double>(params.step());
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& e = params[k];
    const auto& g = grads.values[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      e.first_moment[i] = options.beta1 * e.first_moment[i] + (1.0 - options.beta1) * g[i];
      e.second_moment[i] = options.beta2 * e.second_moment[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double mhat = e.first_moment[i] / c1;
      const double vhat = e.second_moment[i] / c2;
      e.value.values[i] -= options.learning_rate * mhat / (std::sqrt(vhat) + options.epsilon);
    }
  }
}

// ---- checkpoint ---------------------------------------------------------------

namespace {

constexpr const char* kMagic = "REFLX1";

void put_le_double(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le_double(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string read_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(std::string("checkpoint: missing ") + what);
  return line;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& arch_line,
                     const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << kMagic << "\n" << "arch " << arch_line << "\n" << "params " << params.size() << "\n";
  for (const auto& e : params) {
    out << e.name << " " << e.value.shape.rows << " " << e.value.shape.cols << "\n";
    for (double v : e.value.values) put_le_double(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  if (read_line(in, "magic") != kMagic) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  CheckpointContents c;
  std::string arch = read_line(in, "arch line");
  if (arch.rfind("arch ", 0) != 0) throw std::runtime_error("checkpoint: malformed arch line");
  c.arch_line = arch.substr(5);
  std::istringstream count_line(read_line(in, "params line"));
  std::string tag;
  std::size_t count = 0;
  if (!(count_line >> tag >> count) || tag != "params") {
    throw std::runtime_error("checkpoint: malformed params line");
  }
  for (std::size_t k = 0; k < count; ++k) {
    std::istringstream header(read_line(in, "parameter header"));
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(header >> name >> rows >> cols)) {
      throw std::runtime_error("checkpoint: malformed parameter header #" + std::to_string(k));
    }
    ad::Matrix m(rows, cols);
    for (double& v : m.values) v = get_le_double(in);
    c.tensors.emplace_back(std::move(name), std::move(m));
  }
  return c;
}

void load_into(const CheckpointContents& contents, ParameterSet& params) {
  if (contents.tensors.size() != params.size()) {
    throw std::runtime_error("checkpoint: " + std::to_string(contents.tensors.size()) +
                             " tensors but model defines " + std::to_string(params.size()));
  }
  for (const auto& [name, m] : contents.tensors) {
    auto& e = params[params.index_of(name)];
    if (!(e.value.shape == m.shape)) {
      throw std::runtime_error("checkpoint: parameter " + name + " has shape " + m.shape.str() +
                               ", model expects " + e.value.shape.str());
    }
  }
  for (const auto& [name, m] : contents.tensors) params[params.index_of(name)].value = m;
}

}  // namespace reflx
