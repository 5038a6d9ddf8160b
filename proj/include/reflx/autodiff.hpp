#pragma once

// Minimal reverse-mode automatic differentiation over 2-D row-major tensors.
//
// A Tape owns every value produced during one evaluation. Tensor is a cheap
// handle (tape pointer + node id). Nodes are appended in evaluation order, so
// the tape is topologically sorted by construction and backward is a single
// reverse sweep.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace reflx::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Plain owned values, used for parameters, inputs and extracted results.
struct Matrix {
  Shape shape;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, values(rows * cols, fill) {}
  Matrix(Shape s, std::vector<double> v);

  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  double& at(std::size_t r, std::size_t c) { return values[r * shape.cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape.cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * shape.cols, shape.cols};
  }
};

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::span<const double> values() const;
  // Empty until backward has reached this tensor.
  std::span<const double> grad() const;
  bool requires_grad() const;
  double item() const;
  Matrix to_matrix() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    const char* op = "leaf";
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix m);
  Tensor variable(Matrix m);

  // Appends a computed node. `backward` may be empty for non-differentiable ops.
  Tensor record(const char* op, Shape shape, std::vector<double> value,
                std::vector<std::size_t> inputs, BackwardFn backward);

  // Reverse sweep from a 1x1 output. Throws on a non-scalar output.
  void backward(const Tensor& output);

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  // Grad buffer of an input, allocated on first use.
  std::vector<double>& grad_of(std::size_t id);

 private:
  std::vector<Node> nodes_;
};

// ---- primitives -------------------------------------------------------------

// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// Elementwise; `b` may also be a [1,cols] row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// Rows of `table` selected by `indices` -> [indices.size(), table.cols]
Tensor gather_rows(const Tensor& table, std::span<const int> indices);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column-wise concatenation of tensors with equal row counts.
Tensor concat_cols(std::span<const Tensor> parts);
// Mean over rows of -log softmax(logits)[row, target[row]] -> [1,1]
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

// ---- gradient checking --------------------------------------------------------

using Expression = std::function<Tensor(Tape&, std::span<const Tensor>)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
};

// Compares tape gradients with central differences for every coordinate of every
// input. A coordinate whose absolute discrepancy is below `abs_floor` counts as 0.
GradCheckReport finite_diff_check(const Expression& expr, const std::vector<Matrix>& inputs,
                                  double epsilon, double abs_floor = 1e-7);

}  // namespace reflx::ad
