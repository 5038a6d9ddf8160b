#include "reflx/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "reflx/kernels.hpp"

namespace reflx::ad {

std::string Shape::str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

Matrix::Matrix(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
  if (values.size() != shape.size()) {
    throw std::invalid_argument("Matrix: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape.str());
  }
}

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
std::span<const double> Tensor::values() const { return tape_->node(id_).value; }
std::span<const double> Tensor::grad() const { return tape_->node(id_).grad; }
bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

double Tensor::item() const {
  if (shape().size() != 1) throw std::invalid_argument("item: tensor is " + shape().str());
  return values()[0];
}

Matrix Tensor::to_matrix() const {
  auto v = values();
  return Matrix(shape(), std::vector<double>(v.begin(), v.end()));
}

Tensor Tape::constant(Matrix m) {
  Node n;
  n.shape = m.shape;
  n.value = std::move(m.values);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor Tape::variable(Matrix m) {
  Tensor t = constant(std::move(m));
  nodes_.back().requires_grad = true;
  return t;
}

Tensor Tape::record(const char* op, Shape shape, std::vector<double> value,
                    std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.shape = shape;
  n.value = std::move(value);
  for (auto id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.shape.size(), 0.0);
  return n.grad;
}

void Tape::backward(const Tensor& output) {
  if (output.tape() != this) throw std::invalid_argument("backward: tensor from another tape");
  const Node& out = nodes_[output.id()];
  if (out.shape.size() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got " + out.shape.str());
  }
  if (!out.requires_grad) return;
  grad_of(output.id())[0] += 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

namespace {

Tape& common_tape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands must live on the same tape");
  }
  return *a.tape();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.str() + " and " +
                              b.str());
}

bool wants_grad(const Tape& t, std::size_t id) { return t.node(id).requires_grad; }

// true when b is broadcast as a row over a's rows
bool row_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return false;
  if (b.rows == 1 && b.cols == a.cols) return true;
  shape_error(op, a, b);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b, "matmul");
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.cols != sb.rows) shape_error("matmul", sa, sb);
  std::vector<double> out(sa.rows * sb.cols);
  kernels::gemm_nn(a.values().data(), b.values().data(), out.data(), sa.rows, sa.cols, sb.cols,
                   false);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("matmul", {sa.rows, sb.cols}, std::move(out), {ia, ib},
                     [ia, ib, sa, sb](Tape& t, std::size_t self) {
                       const double* g = t.node(self).grad.data();
                       if (wants_grad(t, ia)) {
                         kernels::gemm_nt(g, t.node(ib).value.data(), t.grad_of(ia).data(),
                                          sa.rows, sb.cols, sa.cols, true);
                       }
                       if (wants_grad(t, ib)) {
                         kernels::gemm_tn(t.node(ia).value.data(), g, t.grad_of(ib).data(),
                                          sa.rows, sa.cols, sb.cols, true);
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b, "add");
  const Shape sa = a.shape(), sb = b.shape();
  const bool bcast = row_broadcast(sa, sb, "add");
  auto va = a.values();
  auto vb = b.values();
  std::vector<double> out(sa.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[bcast ? i % sa.cols : i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("add", sa, std::move(out), {ia, ib},
                     [ia, ib, sa, bcast](Tape& t, std::size_t self) {
                       const auto& g = t.node(self).grad;
                       if (wants_grad(t, ia)) {
                         auto& ga = t.grad_of(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (wants_grad(t, ib)) {
                         auto& gb = t.grad_of(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[bcast ? i % sa.cols : i] += g[i];
                       }
                     });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b, "multiply");
  const Shape sa = a.shape(), sb = b.shape();
  const bool bcast = row_broadcast(sa, sb, "multiply");
  auto va = a.values();
  auto vb = b.values();
  std::vector<double> out(sa.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[bcast ? i % sa.cols : i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("multiply", sa, std::move(out), {ia, ib},
                     [ia, ib, sa, bcast](Tape& t, std::size_t self) {
                       const auto& g = t.node(self).grad;
                       const auto& xa = t.node(ia).value;
                       const auto& xb = t.node(ib).value;
                       // x*x reuses one input: both contributions land in the same buffer.
                       if (wants_grad(t, ia)) {
                         auto& ga = t.grad_of(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           ga[i] += g[i] * xb[bcast ? i % sa.cols : i];
                         }
                       }
                       if (wants_grad(t, ib)) {
                         auto& gb = t.grad_of(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           gb[bcast ? i % sa.cols : i] += g[i] * xa[i];
                         }
                       }
                     });
}

Tensor relu(const Tensor& x) {
  auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  const std::size_t ix = x.id();
  return x.tape()->record("relu", x.shape(), std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const auto& in = t.node(ix).value;
    auto& gx = t.grad_of(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) gx[i] += g[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    // branch keeps exp() from overflowing for large |x|
    out[i] = v[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-v[i])) : std::exp(v[i]) / (1.0 + std::exp(v[i]));
  }
  const std::size_t ix = x.id();
  return x.tape()->record("sigmoid", x.shape(), std::move(out), {ix},
                          [ix](Tape& t, std::size_t self) {
                            const auto& g = t.node(self).grad;
                            const auto& y = t.node(self).value;
                            auto& gx = t.grad_of(ix);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
                          });
}

Tensor softmax(const Tensor& x) {
  const Shape s = x.shape();
  std::vector<double> out(s.size());
  kernels::softmax_rows(x.values().data(), out.data(), s.rows, s.cols);
  const std::size_t ix = x.id();
  return x.tape()->record("softmax", s, std::move(out), {ix}, [ix, s](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const auto& y = t.node(self).value;
    auto& gx = t.grad_of(ix);
    for (std::size_t r = 0; r < s.rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < s.cols; ++c) dot += g[r * s.cols + c] * y[r * s.cols + c];
      for (std::size_t c = 0; c < s.cols; ++c) {
        const std::size_t i = r * s.cols + c;
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const Shape s = x.shape();
  std::vector<double> out(s.size());
  kernels::log_softmax_rows(x.values().data(), out.data(), s.rows, s.cols);
  const std::size_t ix = x.id();
  return x.tape()->record("log_softmax", s, std::move(out), {ix},
                          [ix, s](Tape& t, std::size_t self) {
                            const auto& g = t.node(self).grad;
                            const auto& y = t.node(self).value;
                            auto& gx = t.grad_of(ix);
                            for (std::size_t r = 0; r < s.rows; ++r) {
                              double total = 0.0;
                              for (std::size_t c = 0; c < s.cols; ++c) total += g[r * s.cols + c];
                              for (std::size_t c = 0; c < s.cols; ++c) {
                                const std::size_t i = r * s.cols + c;
                                gx[i] += g[i] - std::exp(y[i]) * total;
                              }
                            }
                          });
}

Tensor gather_rows(const Tensor& table, std::span<const int> indices) {
  const Shape s = table.shape();
  std::vector<double> out(indices.size() * s.cols);
  auto v = table.values();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || static_cast<std::size_t>(indices[r]) >= s.rows) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(indices[r]) +
                                  " outside table " + s.str());
    }
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(indices[r] * s.cols), s.cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * s.cols));
  }
  const std::size_t it = table.id();
  std::vector<int> idx(indices.begin(), indices.end());
  return table.tape()->record("gather_rows", {indices.size(), s.cols}, std::move(out), {it},
                              [it, s, idx = std::move(idx)](Tape& t, std::size_t self) {
                                const auto& g = t.node(self).grad;
                                auto& gt = t.grad_of(it);
                                for (std::size_t r = 0; r < idx.size(); ++r) {
                                  const std::size_t base = static_cast<std::size_t>(idx[r]) * s.cols;
                                  for (std::size_t c = 0; c < s.cols; ++c) gt[base + c] += g[r * s.cols + c];
                                }
                              });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  const std::size_t ix = x.id();
  return x.tape()->record("sum", {1, 1}, {total}, {ix}, [ix](Tape& t, std::size_t self) {
    const double g = t.node(self).grad[0];
    for (double& gx : t.grad_of(ix)) gx += g;
  });
}

Tensor mean(const Tensor& x) {
  const std::size_t count = x.shape().size();
  if (count == 0) throw std::invalid_argument("mean: empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const std::size_t ix = x.id();
  return x.tape()->record("mean", {1, 1}, {total / static_cast<double>(count)}, {ix},
                          [ix, count](Tape& t, std::size_t self) {
                            const double g = t.node(self).grad[0] / static_cast<double>(count);
                            for (double& gx : t.grad_of(ix)) gx += g;
                          });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape* tape = parts.front().tape();
  const std::size_t rows = parts.front().shape().rows;
  std::size_t cols = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    if (p.tape() != tape) throw std::invalid_argument("concat_cols: operands on different tapes");
    if (p.shape().rows != rows) shape_error("concat_cols", parts.front().shape(), p.shape());
    ids.push_back(p.id());
    widths.push_back(p.shape().cols);
    cols += p.shape().cols;
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto v = p.values();
    const std::size_t w = p.shape().cols;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
    }
    offset += w;
  }
  return tape->record("concat_cols", {rows, cols}, std::move(out), ids,
                      [ids, widths, rows, cols](Tape& t, std::size_t self) {
                        const auto& g = t.node(self).grad;
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          const std::size_t w = widths[k];
                          if (wants_grad(t, ids[k])) {
                            auto& gp = t.grad_of(ids[k]);
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * cols + off + c];
                            }
                          }
                          off += w;
                        }
                      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const Shape s = logits.shape();
  if (targets.size() != s.rows) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for logits " + s.str());
  }
  std::vector<double> logp(s.size());
  kernels::log_softmax_rows(logits.values().data(), logp.data(), s.rows, s.cols);
  double total = 0.0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= s.cols) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(targets[r]) +
                                  " outside " + std::to_string(s.cols) + " classes");
    }
    total -= logp[r * s.cols + static_cast<std::size_t>(targets[r])];
  }
  const double value = total / static_cast<double>(s.rows);
  const std::size_t il = logits.id();
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.tape()->record(
      "cross_entropy", {1, 1}, {value}, {il},
      [il, s, tgt = std::move(tgt), logp = std::move(logp)](Tape& t, std::size_t self) {
        const double g = t.node(self).grad[0] / static_cast<double>(s.rows);
        auto& gl = t.grad_of(il);
        for (std::size_t r = 0; r < s.rows; ++r) {
          for (std::size_t c = 0; c < s.cols; ++c) {
            const std::size_t i = r * s.cols + c;
            const double onehot = static_cast<int>(c) == tgt[r] ? 1.0 : 0.0;
            gl[i] += g * (std::exp(logp[i]) - onehot);
          }
        }
      });
}

GradCheckReport finite_diff_check(const Expression& expr, const std::vector<Matrix>& inputs,
                                  double epsilon, double abs_floor) {
  if (epsilon <= 0.0) throw std::invalid_argument("finite_diff_check: epsilon must be positive");

  auto evaluate = [&](const std::vector<Matrix>& in) {
    Tape tape;
    std::vector<Tensor> vars;
    for (const auto& m : in) vars.push_back(tape.constant(m));
    return expr(tape, vars).item();
  };

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Tensor> vars;
    for (const auto& m : inputs) vars.push_back(tape.variable(m));
    Tensor out = expr(tape, vars);
    tape.backward(out);
    for (const auto& v : vars) {
      auto g = v.grad();
      analytic.emplace_back(g.begin(), g.end());
      if (analytic.back().empty()) analytic.back().assign(v.shape().size(), 0.0);
    }
  }

  GradCheckReport report;
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].values.size(); ++i) {
      const double saved = probe[k].values[i];
      probe[k].values[i] = saved + epsilon;
      const double up = evaluate(probe);
      probe[k].values[i] = saved - epsilon;
      const double down = evaluate(probe);
      probe[k].values[i] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double diff = std::abs(numeric - analytic[k][i]);
      double err = 0.0;
      if (diff > abs_floor) err = diff / std::max(std::abs(numeric), std::abs(analytic[k][i]));
      ++report.coordinates;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_input = k;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace reflx::ad
