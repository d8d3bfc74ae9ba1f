#include <doctest.h>

#include <random>

#include "aglp/tape.hpp"
#include "gradcheck.hpp"

using aglp::Matrix;
using aglp::Tape;
using aglp::Tensor;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng,
                     double magnitude = 10.0) {
  std::uniform_real_distribution<double> u(-magnitude, magnitude);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  }
  return m;
}

}  // namespace

TEST_CASE("matmul values") {
  Tape tape;
  Matrix eye = Matrix::Identity(2, 2);
  Matrix v(2, 1);
  v << 2, 3;
  Tensor out = matmul(tape.constant(eye), tape.constant(v));
  CHECK(out.value() == v);

  Matrix a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  CHECK(matmul(tape.constant(a), tape.constant(b)).value()(0, 0) == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Tensor a = tape.constant(Matrix::Zero(3, 4));
  Tensor b = tape.constant(Matrix::Zero(3, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul: inner dimensions disagree, 3x4 vs 3x2",
                       std::invalid_argument);
}

TEST_CASE("matmul gradient of sum equals ones * b^T") {
  std::mt19937_64 rng(7);
  Matrix av = random_matrix(3, 4, rng);
  Matrix bv = random_matrix(4, 2, rng);

  Tape tape;
  Tensor a = tape.parameter(av);
  Tensor b = tape.parameter(bv);
  Tensor loss = sum_all(matmul(a, b));
  tape.backward(loss);
  Matrix expected = Matrix::Ones(3, 2) * bv.transpose();
  CHECK((tape.grad(a) - expected).cwiseAbs().maxCoeff() < 1e-12);

  gradtest::LossFn f = [&](const std::vector<Matrix>& w) {
    Tape t;
    return sum_all(matmul(t.parameter(w[0]), t.parameter(w[1]))).value()(0, 0);
  };
  CHECK(gradtest::rel_error(tape.grad(a),
                            gradtest::finite_difference(f, {av, bv}, 0)) <
        1e-4);
}

TEST_CASE("softmax rows") {
  Tape tape;
  Matrix x(3, 2);
  x << 0, 0, 1000, 1000, 1, 0;
  Matrix p = softmax_rows(tape.constant(x)).value();
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p(1, 0) == doctest::Approx(0.5).epsilon(1e-12));  // no overflow
  const double e = std::exp(1.0);
  CHECK(p(2, 0) == doctest::Approx(e / (e + 1)).epsilon(1e-10));
  CHECK(p(2, 1) == doctest::Approx(1 / (e + 1)).epsilon(1e-10));
}

TEST_CASE("softmax rows sum to one and shift-invariant") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = random_matrix(5, 6, rng);
    Tape tape;
    Matrix p = softmax_rows(tape.constant(x)).value();
    Matrix shifted = x;
    shifted.array().colwise() += Eigen::ArrayXd::Constant(5, 17.5);
    Matrix p2 = softmax_rows(tape.constant(shifted)).value();
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
      CHECK((p.row(i) - p2.row(i)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("backward basics") {
  Tape tape;
  Matrix xv(2, 3);
  xv << 1, -2, 3, 4, 5, -6;
  Tensor x = tape.parameter(xv);
  tape.backward(sum_all(x));
  CHECK(tape.grad(x) == Matrix::Ones(2, 3));

  Tape tape2;
  Matrix v(3, 1);
  v << 1, 2, 3;
  Tensor y = tape2.parameter(v);
  Tensor loss = matmul(transpose(y), y);
  tape2.backward(loss);
  CHECK((tape2.grad(y) - 2 * v).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Tensor x = tape.parameter(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("unreachable leaf receives zero gradient") {
  Tape tape;
  Tensor used = tape.parameter(Matrix::Ones(2, 2));
  Tensor unused = tape.parameter(Matrix::Ones(3, 1));
  tape.backward(sum_all(used));
  CHECK(tape.grad(unused) == Matrix::Zero(3, 1));
}

TEST_CASE("constant never accumulates gradient") {
  Tape tape;
  Tensor c = tape.constant(Matrix::Ones(2, 2));
  Tensor p = tape.parameter(Matrix::Ones(2, 2));
  tape.backward(sum_all(cwise_mul(c, p)));
  CHECK_FALSE(c.requires_grad());
  CHECK(tape.grad(c) == Matrix::Zero(2, 2));
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(11);
  Matrix xv = random_matrix(4, 3, rng);
  auto run = [&]() {
    Tape tape;
    Tensor x = tape.parameter(xv);
    Tensor loss = mean_all(cwise_mul(softmax_rows(x), exp_elem(scale(x, 0.1))));
    tape.backward(loss);
    return Matrix(tape.grad(x));
  };
  Matrix g1 = run();
  Matrix g2 = run();
  CHECK(g1 == g2);  // bit-identical
}

// Every differentiable primitive against the central finite-difference
// oracle, randomized inputs of magnitude <= 10, 20 seeds.
TEST_CASE("primitive gradients match finite differences") {
  struct Case {
    const char* name;
    std::function<Tensor(Tape&, Tensor, Tensor)> build;  // params a (4x3), b (3x4)
  };
  const std::vector<Case> cases = {
      {"matmul", [](Tape&, Tensor a, Tensor b) { return sum_all(matmul(a, b)); }},
      {"transpose", [](Tape&, Tensor a, Tensor) { return sum_all(transpose(a)); }},
      {"add", [](Tape&, Tensor a, Tensor b) {
         return sum_all(add(a, transpose(b)));
       }},
      {"sub", [](Tape&, Tensor a, Tensor b) {
         return sum_all(sub(a, transpose(b)));
       }},
      {"cwise_mul", [](Tape&, Tensor a, Tensor b) {
         return sum_all(cwise_mul(a, transpose(b)));
       }},
      {"affine", [](Tape&, Tensor a, Tensor) {
         return sum_all(affine(a, -2.5, 0.75));
       }},
      {"exp", [](Tape&, Tensor a, Tensor) {
         return sum_all(exp_elem(scale(a, 0.1)));
       }},
      {"log_clamped", [](Tape&, Tensor a, Tensor) {
         return sum_all(log_clamped(affine(exp_elem(scale(a, 0.05)), 1.0, 0.5)));
       }},
      {"relu", [](Tape&, Tensor a, Tensor) { return sum_all(relu(a)); }},
      {"sigmoid", [](Tape&, Tensor a, Tensor) { return sum_all(sigmoid(a)); }},
      {"rsqrt", [](Tape&, Tensor a, Tensor) {
         return sum_all(rsqrt(affine(cwise_mul(a, a), 1.0, 1.0)));
       }},
      {"row_sum", [](Tape&, Tensor a, Tensor) {
         return sum_all(cwise_mul(row_sum(a), row_sum(a)));
       }},
      {"col_sum", [](Tape&, Tensor a, Tensor) {
         return sum_all(cwise_mul(col_sum(a), col_sum(a)));
       }},
      {"mean_all", [](Tape&, Tensor a, Tensor) {
         return cwise_mul(mean_all(a), mean_all(a));
       }},
      {"softmax_rows", [](Tape&, Tensor a, Tensor b) {
         return sum_all(cwise_mul(softmax_rows(a), transpose(b)));
       }},
      {"pairwise_sqdist", [](Tape&, Tensor a, Tensor b) {
         return mean_all(pairwise_sqdist(a, transpose(b)));
       }},
      {"concat_cols", [](Tape&, Tensor a, Tensor b) {
         return sum_all(cwise_mul(concat_cols(a, transpose(b)),
                                  concat_cols(transpose(b), a)));
       }},
      {"concat_rows", [](Tape&, Tensor a, Tensor b) {
         return sum_all(cwise_mul(concat_rows(a, b.tape()->constant(
                                                     Matrix::Ones(1, 3))),
                                  concat_rows(a, b.tape()->constant(
                                                     Matrix::Ones(1, 3)))));
       }},
      {"rows", [](Tape&, Tensor a, Tensor) {
         return sum_all(cwise_mul(rows(a, 1, 2), rows(a, 0, 2)));
       }},
      {"scale_rows", [](Tape& t, Tensor a, Tensor b) {
         Tensor s = matmul(transpose(b), t.constant(Matrix::Ones(3, 1)));
         return sum_all(scale_rows(a, s));
       }},
      {"scale_cols", [](Tape& t, Tensor a, Tensor b) {
         Tensor s = matmul(b, t.constant(Matrix::Ones(4, 1)));
         return sum_all(scale_cols(a, s));
       }},
      {"add_row_vector", [](Tape& t, Tensor a, Tensor b) {
         return sum_all(cwise_mul(add_row_vector(a, rows(transpose(b), 0, 1)),
                                  a));
       }},
      {"apply_mask", [](Tape&, Tensor a, Tensor) {
         Matrix mask(4, 3);
         mask << 1, 0, 2, 0, 1, 1, 2, 0, 0, 1, 1, 0;
         return sum_all(apply_mask(a, mask));
       }},
  };

  for (const Case& c : cases) {
    CAPTURE(c.name);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      std::mt19937_64 rng(seed);
      Matrix av = random_matrix(4, 3, rng);
      Matrix bv = random_matrix(3, 4, rng);

      Tape tape;
      Tensor a = tape.parameter(av);
      Tensor b = tape.parameter(bv);
      Tensor loss = c.build(tape, a, b);
      tape.backward(loss);

      gradtest::LossFn f = [&](const std::vector<Matrix>& w) {
        Tape t;
        Tensor pa = t.parameter(w[0]);
        Tensor pb = t.parameter(w[1]);
        return c.build(t, pa, pb).value()(0, 0);
      };
      CHECK(gradtest::rel_error(
                tape.grad(a),
                gradtest::finite_difference(f, {av, bv}, 0)) < 1e-4);
      CHECK(gradtest::rel_error(
                tape.grad(b),
                gradtest::finite_difference(f, {av, bv}, 1)) < 1e-4);
    }
  }
}

TEST_CASE("top_k_index_sets ties break by lowest index") {
  Matrix x(2, 4);
  x << 1, 1, 1, 1, 0, 2, 2, 0;
  auto sets = aglp::top_k_index_sets(x, 2);
  CHECK(sets[0] == std::vector<int>{0, 1});
  CHECK(sets[1] == std::vector<int>{1, 2});
  CHECK_THROWS_AS(aglp::top_k_index_sets(x, 5), std::invalid_argument);
}
