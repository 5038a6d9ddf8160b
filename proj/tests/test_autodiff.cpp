#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "reflx/autodiff.hpp"
#include "reflx/kernels.hpp"
#include "reflx/optim.hpp"
#include "reflx/rng.hpp"

using namespace reflx;
using ad::Matrix;
using ad::Tape;
using ad::Tensor;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.values) v = rng.uniform(lo, hi);
  return m;
}

// Values away from the relu kink so central differences stay on one side.
Matrix kink_free(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.values) {
    v = rng.uniform(0.1, 1.0);
    if (rng.bernoulli(0.5)) v = -v;
  }
  return m;
}

constexpr double kFdTolerance = 1e-4;
constexpr double kFdEpsilon = 1e-5;

}  // namespace

TEST_CASE("matmul by identity returns the input") {
  Tape t;
  const Tensor a = t.constant(Matrix({2, 2}, {1, 2, 3, 4}));
  const Tensor eye = t.constant(Matrix({2, 2}, {1, 0, 0, 1}));
  const auto v = ad::matmul(a, eye).values();
  CHECK(std::vector<double>(v.begin(), v.end()) == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  const auto v = ad::softmax(t.constant(Matrix({1, 2}, {0, 0}))).values();
  CHECK(v[0] == doctest::Approx(0.5));
  CHECK(v[1] == doctest::Approx(0.5));
}

TEST_CASE("relu clamps negatives") {
  Tape t;
  const auto v = ad::relu(t.constant(Matrix({1, 3}, {-1, 0, 2}))).values();
  CHECK(std::vector<double>(v.begin(), v.end()) == std::vector<double>{0, 0, 2});
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tape t;
  const Tensor a = t.constant(Matrix(2, 3));
  const Tensor b = t.constant(Matrix(2, 3));
  try {
    ad::matmul(a, b);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(a, t.constant(Matrix(3, 2))), std::invalid_argument);
}

TEST_CASE("d/dx x^2 at 3 is 6") {
  Tape t;
  const Tensor x = t.variable(Matrix::scalar(3.0));
  t.backward(ad::multiply(x, x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("d/dx sum(relu(x)) at [-1, 2]") {
  Tape t;
  const Tensor x = t.variable(Matrix({1, 2}, {-1, 2}));
  t.backward(ad::sum(ad::relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("cross-entropy gradient at zero logits, target 0") {
  Tape t;
  const Tensor z = t.variable(Matrix({1, 2}, {0, 0}));
  const int target[] = {0};
  t.backward(ad::cross_entropy(z, target));
  CHECK(z.grad()[0] == doctest::Approx(-0.5));
  CHECK(z.grad()[1] == doctest::Approx(0.5));
}

TEST_CASE("backward on a non-scalar throws") {
  Tape t;
  const Tensor x = t.variable(Matrix(2, 2, 1.0));
  CHECK_THROWS(t.backward(ad::relu(x)));
}

TEST_CASE("reused tensor accumulates one contribution per use") {
  Rng rng(5);
  const Matrix xv = random_matrix(3, 4, rng);
  for (int k = 1; k <= 4; ++k) {
    Tape t;
    const Tensor x = t.variable(xv);
    Tensor acc = ad::sum(x);
    for (int j = 1; j < k; ++j) acc = ad::add(acc, ad::sum(x));
    t.backward(acc);
    for (double g : x.grad()) CHECK(g == doctest::Approx(static_cast<double>(k)));
  }
  // Same input feeding both operands of one op.
  Tape t;
  const Tensor x = t.variable(xv);
  t.backward(ad::sum(ad::multiply(x, x)));
  for (std::size_t i = 0; i < xv.values.size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 * xv.values[i]));
  }
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(7);
  Tape t;
  const Matrix x = random_matrix(20, 9, rng, -30.0, 30.0);
  const Tensor s = ad::softmax(t.constant(x));
  for (std::size_t r = 0; r < 20; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      const double v = s.values()[r * 9 + c];
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("every primitive passes finite differences") {
  Rng rng(11);
  const std::vector<int> idx = {2, 0, 2, 1};
  const std::vector<int> targets = {1, 0, 2};

  struct Case {
    const char* name;
    ad::Expression expr;
    std::vector<Matrix> inputs;
  };
  // Non-scalar ops are reduced with a random weighting so every output
  // coordinate contributes.
  auto weighted = [](Tape& t, const Tensor& y, std::uint64_t seed) {
    Rng w(seed);
    Matrix m(y.shape().rows, y.shape().cols);
    for (auto& v : m.values) v = w.uniform(-1.0, 1.0);
    return ad::sum(ad::multiply(y, t.constant(m)));
  };
  std::vector<Case> cases = {
      {"matmul", [&](Tape& t, auto in) { return weighted(t, ad::matmul(in[0], in[1]), 1); },
       {random_matrix(3, 4, rng), random_matrix(4, 2, rng)}},
      {"add", [&](Tape& t, auto in) { return weighted(t, ad::add(in[0], in[1]), 2); },
       {random_matrix(3, 4, rng), random_matrix(3, 4, rng)}},
      {"add-broadcast", [&](Tape& t, auto in) { return weighted(t, ad::add(in[0], in[1]), 3); },
       {random_matrix(3, 4, rng), random_matrix(1, 4, rng)}},
      {"multiply", [&](Tape& t, auto in) { return weighted(t, ad::multiply(in[0], in[1]), 4); },
       {random_matrix(3, 4, rng), random_matrix(3, 4, rng)}},
      {"multiply-broadcast",
       [&](Tape& t, auto in) { return weighted(t, ad::multiply(in[0], in[1]), 5); },
       {random_matrix(3, 4, rng), random_matrix(1, 4, rng)}},
      {"relu", [&](Tape& t, auto in) { return weighted(t, ad::relu(in[0]), 6); },
       {kink_free(3, 4, rng)}},
      {"sigmoid", [&](Tape& t, auto in) { return weighted(t, ad::sigmoid(in[0]), 7); },
       {random_matrix(3, 4, rng, -3, 3)}},
      {"softmax", [&](Tape& t, auto in) { return weighted(t, ad::softmax(in[0]), 8); },
       {random_matrix(3, 4, rng, -3, 3)}},
      {"log_softmax", [&](Tape& t, auto in) { return weighted(t, ad::log_softmax(in[0]), 9); },
       {random_matrix(3, 4, rng, -3, 3)}},
      {"gather_rows", [&](Tape& t, auto in) { return weighted(t, ad::gather_rows(in[0], idx), 10); },
       {random_matrix(3, 5, rng)}},
      {"sum", [&](Tape&, auto in) { return ad::sum(in[0]); }, {random_matrix(3, 4, rng)}},
      {"mean", [&](Tape& t, auto in) { return weighted(t, ad::mean(in[0]), 11); },
       {random_matrix(3, 4, rng)}},
      {"concat_cols",
       [&](Tape& t, auto in) {
         const Tensor parts[] = {in[0], in[1], in[0]};
         return weighted(t, ad::concat_cols(parts), 12);
       },
       {random_matrix(3, 2, rng), random_matrix(3, 4, rng)}},
      {"cross_entropy", [&](Tape&, auto in) { return ad::cross_entropy(in[0], targets); },
       {random_matrix(3, 3, rng, -3, 3)}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto report = ad::finite_diff_check(c.expr, c.inputs, kFdEpsilon);
    CHECK(report.coordinates > 0);
    CHECK(report.max_relative_error < kFdTolerance);
  }
}

TEST_CASE("quadratic form: central differences exact to O(eps^2)") {
  Rng rng(13);
  const Matrix a = random_matrix(4, 4, rng);
  const auto report = ad::finite_diff_check(
      [&](Tape& t, std::span<const Tensor> in) {
        return ad::sum(ad::multiply(ad::matmul(in[0], t.constant(a)), in[0]));
      },
      {random_matrix(1, 4, rng)}, 1e-5);
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("constant expression has zero error") {
  const auto report = ad::finite_diff_check(
      [](Tape& t, std::span<const Tensor>) { return t.constant(Matrix::scalar(3.0)); },
      {Matrix(2, 2, 1.0)}, 1e-5);
  CHECK(report.max_relative_error == 0.0);
}

TEST_CASE("evaluation is deterministic") {
  Rng rng(17);
  const Matrix a = random_matrix(5, 6, rng), b = random_matrix(6, 3, rng);
  auto run = [&] {
    Tape t;
    const Tensor x = t.variable(a);
    const Tensor y = ad::softmax(ad::matmul(x, t.constant(b)));
    const int targets[] = {0, 1, 2, 0, 1};
    const Tensor loss = ad::cross_entropy(ad::log_softmax(ad::matmul(x, t.constant(b))), targets);
    t.backward(ad::add(loss, ad::mean(y)));
    auto g = x.grad();
    return std::vector<double>(g.begin(), g.end());
  };
  CHECK(run() == run());
}

TEST_CASE("parallel kernels match the serial reference") {
  Rng rng(19);
  for (auto [n, k, m] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 5, 3}, {81, 96, 96}, {33, 17, 65}}) {
    const Matrix a = random_matrix(n, k, rng), b = random_matrix(k, m, rng);
    const Matrix at = random_matrix(n, m, rng);
    for (bool acc : {false, true}) {
      Matrix c1 = random_matrix(n, m, rng), c2 = c1;
      kernels::gemm_nn(a.values.data(), b.values.data(), c1.values.data(), n, k, m, acc);
      kernels::serial::gemm_nn(a.values.data(), b.values.data(), c2.values.data(), n, k, m, acc);
      for (std::size_t i = 0; i < c1.values.size(); ++i) CHECK(c1.values[i] == doctest::Approx(c2.values[i]).epsilon(1e-12));

      Matrix d1 = random_matrix(k, m, rng), d2 = d1;
      kernels::gemm_tn(a.values.data(), at.values.data(), d1.values.data(), n, k, m, acc);
      kernels::serial::gemm_tn(a.values.data(), at.values.data(), d2.values.data(), n, k, m, acc);
      for (std::size_t i = 0; i < d1.values.size(); ++i) CHECK(d1.values[i] == doctest::Approx(d2.values[i]).epsilon(1e-12));

      Matrix e1 = random_matrix(n, k, rng), e2 = e1;
      kernels::gemm_nt(at.values.data(), b.values.data(), e1.values.data(), n, m, k, acc);
      kernels::serial::gemm_nt(at.values.data(), b.values.data(), e2.values.data(), n, m, k, acc);
      for (std::size_t i = 0; i < e1.values.size(); ++i) CHECK(e1.values[i] == doctest::Approx(e2.values[i]).epsilon(1e-12));
    }
    Matrix s1(n, m), s2(n, m), l1(n, m), l2(n, m);
    kernels::softmax_rows(at.values.data(), s1.values.data(), n, m);
    kernels::serial::softmax_rows(at.values.data(), s2.values.data(), n, m);
    kernels::log_softmax_rows(at.values.data(), l1.values.data(), n, m);
    kernels::serial::log_softmax_rows(at.values.data(), l2.values.data(), n, m);
    for (std::size_t i = 0; i < s1.values.size(); ++i) {
      CHECK(s1.values[i] == doctest::Approx(s2.values[i]).epsilon(1e-12));
      CHECK(l1.values[i] == doctest::Approx(l2.values[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adam: zero gradient leaves parameters, advances the step") {
  ParameterSet p;
  p.add("w", Matrix({1, 3}, {1, -2, 3}));
  const Gradients g = Gradients::zeros_like(p);
  adam_update(p, g, {});
  CHECK(p[0].value.values == std::vector<double>{1, -2, 3});
  CHECK(p.step() == 1);
}

TEST_CASE("adam: first step on p=1, g=1, lr=0.1 lands near 0.9") {
  ParameterSet p;
  p.add("p", Matrix::scalar(1.0));
  Gradients g = Gradients::zeros_like(p);
  g.values[0][0] = 1.0;
  adam_update(p, g, {0.1});
  CHECK(p[0].value.values[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: identical state gives bit-identical updates") {
  Rng rng(23);
  ParameterSet a;
  a.add_uniform("w", 4, 3, rng);
  ParameterSet b = a;
  Gradients g = Gradients::zeros_like(a);
  for (auto& v : g.values[0]) v = rng.uniform(-1, 1);
  for (int i = 0; i < 3; ++i) {
    adam_update(a, g, {});
    adam_update(b, g, {});
  }
  CHECK(a[0].value.values == b[0].value.values);
}

TEST_CASE("adam: non-finite gradient names the parameter, nothing changes") {
  ParameterSet p;
  p.add("first", Matrix::scalar(1.0));
  p.add("second", Matrix::scalar(2.0));
  Gradients g = Gradients::zeros_like(p);
  g.values[0][0] = 0.5;
  g.values[1][0] = std::nan("");
  try {
    adam_update(p, g, {});
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("second") != std::string::npos);
  }
  CHECK(p[0].value.values[0] == 1.0);
  CHECK(p.step() == 0);
}

TEST_CASE("parameter names are unique; initialisation bounds") {
  Rng rng(29);
  ParameterSet p;
  p.add_uniform("w", 16, 8, rng);
  p.add_zeros("b", 1, 8);
  CHECK_THROWS(p.add_zeros("w", 1, 1));
  for (double v : p[0].value.values) CHECK(std::abs(v) <= 0.25);
  for (double v : p[1].value.values) CHECK(v == 0.0);
  CHECK(p[0].first_moment.size() == p[0].value.values.size());
  CHECK(p[0].second_moment.size() == p[0].value.values.size());
}

TEST_CASE("checkpoint round trip and shape validation") {
  Rng rng(31);
  ParameterSet p;
  p.add_uniform("embed", 5, 4, rng);
  p.add_zeros("bias", 1, 4);
  const auto path = std::filesystem::temp_directory_path() / "reflx_test_ckpt.bin";
  save_checkpoint(path, "arch task=sudoku side=4 d=4 T=0", p);
  {
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    std::getline(in, magic);
    CHECK(magic == "REFLX1");
  }
  const auto contents = read_checkpoint(path);
  CHECK(contents.arch_line == "arch task=sudoku side=4 d=4 T=0");
  ParameterSet q;
  q.add_zeros("embed", 5, 4);
  q.add_zeros("bias", 1, 4);
  load_into(contents, q);
  CHECK(q[0].value.values == p[0].value.values);

  ParameterSet wrong;
  wrong.add_zeros("embed", 4, 4);
  wrong.add_zeros("bias", 1, 4);
  CHECK_THROWS(load_into(contents, wrong));

  std::ofstream(path, std::ios::binary) << "NOTREFLX\n";
  CHECK_THROWS(read_checkpoint(path));
  std::filesystem::remove(path);
}
