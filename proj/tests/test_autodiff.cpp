#include "support.hpp"

#include <doctest.h>

#include <stdexcept>

using namespace hypercloud;
using hctest::random_matrix;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("forward values of basic primitives") {
  Tape t;
  Var a = t.var(t.constant(mat({{1, 2}, {3, 4}})));
  Var b = t.var(t.constant(mat({{1}, {1}})));
  CHECK(matmul(a, b).value() == mat({{3}, {7}}));

  Var r = t.var(t.constant(mat({{-1, 0, 2}})));
  CHECK(relu(r).value() == mat({{0, 0, 2}}));

  Var m = t.var(t.constant(mat({{1, 5}, {3, 2}})));
  CHECK(max_rows(m).value() == mat({{3, 5}}));
  CHECK(t.argmax(max_rows(m).id) == std::vector<Index>{1, 0});
}

TEST_CASE("max_rows breaks ties toward the lowest row") {
  Tape t;
  Var m = t.var(t.leaf(mat({{2, 1}, {2, 1}, {0, 1}})));
  Var mx = max_rows(m);
  CHECK(t.argmax(mx.id) == std::vector<Index>{0, 0});
  t.backward(sum(mx).id);
  CHECK(t.grad(m.id) == mat({{1, 1}, {0, 0}, {0, 0}}));
}

TEST_CASE("add broadcasts a single row") {
  Tape t;
  Var a = t.var(t.leaf(mat({{1, 2}, {3, 4}, {5, 6}})));
  Var b = t.var(t.leaf(mat({{10, 20}})));
  CHECK((a + b).value() == mat({{11, 22}, {13, 24}, {15, 26}}));
  t.backward(sum(a + b).id);
  CHECK(t.grad(b.id) == mat({{3, 3}}));
}

TEST_CASE("hand gradients") {
  {
    Tape t;
    Var x = t.var(t.leaf(mat({{3}})));
    t.backward(sum(cwise_mul(x, x)).id);
    CHECK(t.grad(x.id)(0, 0) == 6.0);
  }
  {
    Tape t;
    Var x = t.var(t.leaf(mat({{-1, 2}})));
    t.backward(sum(relu(x)).id);
    CHECK(t.grad(x.id) == mat({{0, 1}}));
  }
  {
    // relu takes the zero subgradient at the kink
    Tape t;
    Var x = t.var(t.leaf(mat({{0}})));
    t.backward(sum(relu(x)).id);
    CHECK(t.grad(x.id)(0, 0) == 0.0);
  }
}

TEST_CASE("shared subexpressions accumulate gradients") {
  Tape t;
  Var x = t.var(t.leaf(mat({{2, -1}})));
  Var y = x + x;
  t.backward(sum(cwise_mul(y, x)).id);  // 2 x^2
  CHECK(t.grad(x.id) == mat({{8, -4}}));
}

TEST_CASE("slice, reshape and concat route gradients to the right entries") {
  Tape t;
  Var x = t.var(t.leaf(mat({{1, 2, 3}, {4, 5, 6}})));
  Var s = slice(x, 1, 1, 1, 2);
  CHECK(s.value() == mat({{5, 6}}));
  Var r = reshape(x, 3, 2);
  CHECK(r.value() == mat({{1, 2}, {3, 4}, {5, 6}}));
  const Var parts[] = {s, s};
  Var c = concat(parts, 1);
  CHECK(c.value() == mat({{5, 6, 5, 6}}));
  Var w = t.var(t.constant(mat({{1, 10, 100, 1000}})));
  Var loss = sum(cwise_mul(c, w)) + sum(cwise_mul(r, r));
  t.backward(loss.id);
  CHECK(t.grad(x.id) == mat({{2, 4, 6}, {8, 10 + 101, 12 + 1010}}));
}

TEST_CASE("nodes only reference earlier nodes and every reached node has a gradient") {
  Rng rng(3);
  Tape t;
  Var x = t.var(t.leaf(random_matrix(4, 3, rng)));
  Var w = t.var(t.leaf(random_matrix(3, 2, rng)));
  Var loss = sum(tanh(matmul(relu(x), w)));
  t.backward(loss.id);
  for (std::size_t k = 0; k < t.size(); ++k) {
    for (NodeId in : t.inputs(NodeId{k})) CHECK(in.index < k);
    const Matrix& g = t.grad(NodeId{k});
    CHECK(g.rows() == t.value(NodeId{k}).rows());
    CHECK(g.cols() == t.value(NodeId{k}).cols());
  }
}

TEST_CASE("errors") {
  Tape t;
  Var a = t.var(t.constant(Matrix::Ones(2, 3)));
  Var b = t.var(t.constant(Matrix::Ones(2, 3)));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), std::invalid_argument);
  CHECK_THROWS_AS(t.backward(a.id), std::invalid_argument);

  Var neg = t.var(t.constant(mat({{-1.0}})));
  CHECK_THROWS_AS(log(neg), std::domain_error);
  Var nan = t.var(t.constant(mat({{std::nan("")}})));
  CHECK_THROWS_AS(exp(nan), std::domain_error);
  Var big = t.var(t.constant(mat({{1000.0}})));
  CHECK_THROWS_AS(exp(big), std::domain_error);
}

TEST_CASE("clamp composes to elementwise clipping") {
  Tape t;
  Var x = t.var(t.constant(mat({{-30, 0.5, 25}})));
  CHECK(clamp(x, -20, 20).value() == mat({{-20, 0.5, 20}}));
}

TEST_CASE("grad_check on a quadratic is exact up to rounding") {
  const Matrix x = mat({{1, 2, 3}});
  auto f = [](Tape& t, NodeId in) {
    Var v = t.var(in);
    return sum(cwise_mul(v, v)).id;
  };
  const GradCheckResult r = grad_check(f, x, 1e-5);
  CHECK(r.max_rel_error < 1e-8);
  CHECK(r.non_differentiable.empty());
}

TEST_CASE("grad_check flags a relu kink") {
  const Matrix x = mat({{0.7, 0.0, -0.4}});
  auto f = [](Tape& t, NodeId in) { return sum(relu(t.var(in))).id; };
  const GradCheckResult r = grad_check(f, x, 1e-5);
  CHECK(r.non_differentiable == std::vector<Index>{1});
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("grad_check on a tanh perceptron at random points") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix w1 = random_matrix(3, 5, rng);
    const Matrix w2 = random_matrix(5, 1, rng);
    auto f = [&](Tape& t, NodeId in) {
      Var h = tanh(matmul(t.var(in), t.var(t.constant(w1))));
      return sum(tanh(matmul(h, t.var(t.constant(w2))))).id;
    };
    const GradCheckResult r = grad_check(f, random_matrix(4, 3, rng), 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("every parameter of a two-layer perceptron matches finite differences") {
  Rng rng(5);
  const Matrix x = random_matrix(6, 3, rng);
  Matrix w1 = random_matrix(3, 8, rng), b1 = random_matrix(1, 8, rng);
  Matrix w2 = random_matrix(8, 2, rng), b2 = random_matrix(1, 2, rng);
  Matrix* params[] = {&w1, &b1, &w2, &b2};

  auto loss_of = [&](Tape& t, const std::vector<NodeId>& p) {
    Var h = relu(matmul(t.var(t.constant(x)), t.var(p[0])) + t.var(p[1]));
    Var y = matmul(h, t.var(p[2])) + t.var(p[3]);
    return sum(cwise_mul(y, y)).id;
  };

  Tape tape;
  std::vector<NodeId> ids;
  for (Matrix* p : params) ids.push_back(tape.leaf(*p));
  tape.backward(loss_of(tape, ids));

  for (std::size_t k = 0; k < 4; ++k) {
    const Matrix saved = *params[k];
    auto f = [&](const Matrix& probe) {
      *params[k] = probe;
      Tape t;
      std::vector<NodeId> p;
      for (Matrix* q : params) p.push_back(t.leaf(*q));
      return t.value(loss_of(t, p))(0, 0);
    };
    const Matrix fd = hctest::central_difference(f, saved, 1e-5);
    *params[k] = saved;
    CHECK(hctest::max_rel_error(tape.grad(ids[k]), fd) < 1e-4);
  }
}
