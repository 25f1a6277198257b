#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <vector>

#include "dial2vec/autograd.hpp"
#include "dial2vec/rng.hpp"
#include "testutil.hpp"

using dial2vec::Rng;
using dial2vec::ag::Matrix;
using dial2vec::ag::Tape;
using dial2vec::ag::Var;

namespace {

using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares analytic gradients of a scalar-valued graph against central
// finite differences on every entry of every input.
void check_gradients(const LossFn& build, std::vector<Matrix> inputs,
                     double step = 1e-6, double tol = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.parameter(m));
  Var loss = build(tape, vars);
  REQUIRE(loss.rows() == 1);
  REQUIRE(loss.cols() == 1);
  tape.backward(loss);

  for (std::size_t which = 0; which < inputs.size(); ++which) {
    const Matrix analytic = vars[which].grad();
    for (Eigen::Index r = 0; r < inputs[which].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[which].cols(); ++c) {
        const auto eval = [&](double delta) {
          std::vector<Matrix> shifted = inputs;
          shifted[which](r, c) += delta;
          Tape t2;
          std::vector<Var> v2;
          for (const Matrix& m : shifted) v2.push_back(t2.parameter(m));
          return build(t2, v2).scalar();
        };
        const double numeric = (eval(step) - eval(-step)) / (2.0 * step);
        const double denom = std::max({std::abs(numeric), std::abs(analytic(r, c)), 1e-8});
        CHECK(std::abs(numeric - analytic(r, c)) / denom < tol);
      }
    }
  }
}

Var sum_all(Tape& tape, Var m) {
  // dot with ones collapses any shape to a scalar
  return tape.dot(m, tape.constant(Matrix::Ones(m.rows(), m.cols())));
}

}  // namespace

TEST_CASE("matmul gradients") {
  Rng rng(1);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        return sum_all(t, t.matmul(v[0], v[1]));
      },
      {testutil::random_matrix(3, 4, rng), testutil::random_matrix(4, 2, rng)});
}

TEST_CASE("add sub cwise and scale gradients") {
  Rng rng(2);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        Var mix = t.cwise_mul(t.add(v[0], v[1]), t.sub(v[0], t.scale(v[1], 0.7)));
        return sum_all(t, mix);
      },
      {testutil::random_matrix(3, 3, rng), testutil::random_matrix(3, 3, rng)});
}

TEST_CASE("transpose and column block gradients") {
  Rng rng(3);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        Var block = t.col_block(v[0], 1, 2);
        return sum_all(t, t.matmul(t.transpose(block), block));
      },
      {testutil::random_matrix(4, 5, rng)});
}

TEST_CASE("hcat gradients") {
  Rng rng(4);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        Var joined = t.hcat({v[0], v[1], v[2]});
        return sum_all(t, t.cwise_mul(joined, joined));
      },
      {testutil::random_matrix(3, 2, rng), testutil::random_matrix(3, 1, rng),
       testutil::random_matrix(3, 3, rng)});
}

TEST_CASE("add_row_broadcast gradients") {
  Rng rng(5);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        Var shifted = t.add_row_broadcast(v[0], v[1]);
        return sum_all(t, t.cwise_mul(shifted, shifted));
      },
      {testutil::random_matrix(4, 3, rng), testutil::random_matrix(1, 3, rng)});
}

TEST_CASE("gather_rows scatter-adds into the table") {
  Rng rng(6);
  const std::vector<int> indices{2, 0, 2, 1, 2};
  check_gradients(
      [&](Tape& t, const std::vector<Var>& v) {
        Var rows = t.gather_rows(v[0], indices);
        return sum_all(t, t.cwise_mul(rows, rows));
      },
      {testutil::random_matrix(3, 4, rng)});

  // duplicate index accumulates both contributions
  Tape tape;
  Var table = tape.parameter(Matrix::Ones(3, 1));
  Var gathered = tape.gather_rows(table, {1, 1});
  Var loss = sum_all(tape, gathered);
  tape.backward(loss);
  CHECK(table.grad()(1, 0) == doctest::Approx(2.0));
  CHECK(table.grad()(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("gather_rows rejects out-of-range indices") {
  Tape tape;
  Var table = tape.parameter(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(tape.gather_rows(table, {3}), std::out_of_range);
}

TEST_CASE("softmax_rows gradients and row sums") {
  Rng rng(7);
  Tape tape;
  Var x = tape.parameter(testutil::random_matrix(3, 5, rng));
  Var y = tape.softmax_rows(x);
  for (Eigen::Index r = 0; r < 3; ++r) {
    CHECK(y.value().row(r).sum() == doctest::Approx(1.0));
    CHECK(y.value().row(r).minCoeff() > 0.0);
  }
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        Var soft = t.softmax_rows(v[0]);
        // weight rows asymmetrically so the Jacobian is exercised off-diagonal
        Matrix weights(3, 5);
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 5; ++c) weights(r, c) = 0.3 * r - 0.7 * c;
        return t.dot(soft, t.constant(weights));
      },
      {testutil::random_matrix(3, 5, rng)});
}

TEST_CASE("layer_norm_rows normalizes and differentiates") {
  Rng rng(8);
  Tape tape;
  Var x = tape.parameter(testutil::random_matrix(4, 6, rng));
  Var gain = tape.parameter(Matrix::Ones(1, 6));
  Var bias = tape.parameter(Matrix::Zero(1, 6));
  Var y = tape.layer_norm_rows(x, gain, bias);
  for (Eigen::Index r = 0; r < 4; ++r) {
    CHECK(y.value().row(r).mean() == doctest::Approx(0.0).epsilon(1e-9));
    const double var = (y.value().row(r).array() -
                        y.value().row(r).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        Var normed = t.layer_norm_rows(v[0], v[1], v[2]);
        Matrix weights(4, 6);
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 6; ++c) weights(r, c) = 0.1 * (r + 1) * (c - 2);
        return t.dot(normed, t.constant(weights));
      },
      {testutil::random_matrix(4, 6, rng), testutil::random_matrix(1, 6, rng),
       testutil::random_matrix(1, 6, rng)});
}

TEST_CASE("gelu matches its definition and gradient") {
  Tape tape;
  Matrix x(1, 3);
  x << -1.0, 0.0, 2.0;
  Var y = tape.gelu(tape.constant(x));
  CHECK(y.value()(0, 1) == doctest::Approx(0.0));
  CHECK(y.value()(0, 2) == doctest::Approx(2.0 * 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0)))));

  Rng rng(9);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        return sum_all(t, t.gelu(v[0]));
      },
      {testutil::random_matrix(3, 4, rng)});
}

TEST_CASE("mean_rows cosine and scalar op gradients") {
  Rng rng(10);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        Var a = t.mean_rows(v[0]);
        Var b = t.mean_rows(v[1]);
        return t.cosine(a, b);
      },
      {testutil::random_matrix(4, 3, rng), testutil::random_matrix(4, 3, rng)});
}

TEST_CASE("scalar division and sqrt gradients") {
  Rng rng(11);
  Matrix a(1, 1), b(1, 1);
  a << 2.3;
  b << 1.7;
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        return t.div_scalar(t.sqrt_scalar(t.mul_scalar(v[0], v[0])), v[1]);
      },
      {a, b});
}

TEST_CASE("logsumexp_row is stable and differentiable") {
  Tape tape;
  Matrix big(1, 3);
  big << 1000.0, 1000.0, 1000.0;
  Var lse = tape.logsumexp_row(tape.constant(big));
  CHECK(lse.scalar() == doctest::Approx(1000.0 + std::log(3.0)));

  Rng rng(12);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) {
        return t.logsumexp_row(v[0]);
      },
      {testutil::random_matrix(1, 6, rng)});
}

TEST_CASE("masking ops block gradient flow where masked") {
  Rng rng(13);
  Eigen::VectorXd row_mask(4);
  row_mask << 1.0, 0.0, 1.0, 0.0;
  Tape tape;
  Var x = tape.parameter(testutil::random_matrix(4, 3, rng));
  Var masked = tape.scale_rows_const(x, row_mask);
  CHECK(masked.value().row(1).norm() == 0.0);
  CHECK(masked.value().row(3).norm() == 0.0);
  Var loss = sum_all(tape, tape.cwise_mul(masked, masked));
  tape.backward(loss);
  CHECK(x.grad().row(1).norm() == 0.0);
  CHECK(x.grad().row(0).norm() > 0.0);

  check_gradients(
      [&](Tape& t, const std::vector<Var>& v) {
        Var m = t.scale_rows_const(v[0], row_mask);
        Matrix window = Matrix::Ones(4, 4);
        window(0, 3) = 0.0;
        window(3, 0) = 0.0;
        Var corr = t.cwise_mul_const(t.matmul(m, t.transpose(m)), window);
        return sum_all(t, corr);
      },
      {testutil::random_matrix(4, 3, rng)});
}

TEST_CASE("backward on a loss without parameters leaves no gradients") {
  Tape tape;
  Var a = tape.constant(Matrix::Ones(2, 2));
  Var loss = tape.dot(a, a);
  CHECK_NOTHROW(tape.backward(loss));
}

TEST_CASE("parameter untouched by the loss gets exactly zero gradient") {
  Tape tape;
  Var used = tape.parameter(Matrix::Ones(2, 2));
  Var unused = tape.parameter(Matrix::Ones(3, 3));
  Var loss = tape.dot(used, used);
  tape.backward(loss);
  CHECK(unused.grad().norm() == 0.0);
  CHECK(used.grad().norm() > 0.0);
}
