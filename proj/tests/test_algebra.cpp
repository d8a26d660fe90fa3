#include <catch2/catch_amalgamated.hpp>

#include "amalgam/algebra.hpp"

using namespace amalgam;

namespace {

Matrix unit2(int i, int j) {
  Matrix u = Matrix::Zero(2, 2);
  u(i, j) = 1.0;
  return u;
}

}  // namespace

TEST_CASE("block-diagonal context has the expected shape and passes its own checks") {
  AlgebraContext ctx = make_block_diagonal_context({2, 2});
  CHECK(ctx.ambient_n == 4);
  CHECK(ctx.B.dim() == 8);
  CHECK(ctx.D.dim() == 1);

  ContextReport report = check_context(ctx);
  std::string first_failure;
  for (const CheckReport* r :
       {&report.inclusions, &report.coefficient_expectation, &report.base_expectation})
    if (!r->failures.empty() && first_failure.empty()) first_failure = r->failures.front();
  INFO(first_failure);
  CHECK(report.ok());
  CHECK(report.coefficient_expectation.max_violation < 1e-12);

  Matrix m = Matrix::Random(4, 4);
  Matrix pinched = ctx.E.apply(m);
  CHECK(entry_distance(pinched.block(0, 0, 2, 2), m.block(0, 0, 2, 2)) < 1e-12);
  CHECK(entry_distance(pinched.block(2, 2, 2, 2), m.block(2, 2, 2, 2)) < 1e-12);
  CHECK(pinched.block(0, 2, 2, 2).cwiseAbs().maxCoeff() < 1e-12);

  // Compressing then averaging is the plain normalized trace.
  ConditionalExpectation tau = compose(ctx.F, ctx.E);
  CHECK(entry_distance(tau.apply(m), m.trace() / 4.0 * Matrix::Identity(4, 4)) < 1e-12);
}

TEST_CASE("two scalar blocks average their diagonal entries") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 2.0;
  CHECK(entry_distance(ctx.F.apply(m), 1.5 * Matrix::Identity(2, 2)) < 1e-12);

  // Half/half weights on the kernel of F: the signed diagonal spans it.
  Matrix r = restriction_matrix(ctx.F, ctx.B);
  REQUIRE(r.rows() == 1);
  REQUIRE(r.cols() == 2);
  CHECK(std::abs(r(0, 0) - cdouble(0.5)) < 1e-12);
  CHECK(std::abs(r(0, 1) - cdouble(0.5)) < 1e-12);
  auto null_vectors = nullspace_basis(r);
  REQUIRE(null_vectors.size() == 1);
  CHECK(std::abs(null_vectors[0][0] + null_vectors[0][1]) < 1e-12);
}

TEST_CASE("grouped diagonal context averages within groups") {
  AlgebraContext ctx = make_grouped_diagonal_context(4, {{0, 1}, {2, 3}});
  CHECK(ctx.B.dim() == 4);
  CHECK(ctx.D.dim() == 2);
  CHECK(check_context(ctx).ok());

  Eigen::VectorXcd diag(4);
  diag << 1.0, 2.0, 3.0, 4.0;
  Matrix m = diag.asDiagonal();
  Matrix f = ctx.F.apply(m);
  CHECK(std::abs(f(0, 0) - cdouble(1.5)) < 1e-12);
  CHECK(std::abs(f(1, 1) - cdouble(1.5)) < 1e-12);
  CHECK(std::abs(f(2, 2) - cdouble(3.5)) < 1e-12);
  CHECK(std::abs(f(3, 3) - cdouble(3.5)) < 1e-12);

  Matrix inc = inclusion_matrix(ctx.D, ctx.B);
  REQUIRE(inc.rows() == 4);
  REQUIRE(inc.cols() == 2);
  CHECK(std::abs(inc(0, 0) - cdouble(1.0)) < 1e-12);
  CHECK(std::abs(inc(3, 1) - cdouble(1.0)) < 1e-12);
  CHECK(std::abs(inc(2, 0)) < 1e-12);
}

TEST_CASE("algebra construction rejects malformed bases") {
  const Matrix id2 = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(MatrixAlgebra(std::vector<Matrix>{}), ConfigError);
  CHECK_THROWS_AS(MatrixAlgebra({id2, 2.0 * id2}), ConfigError);          // dependent
  CHECK_THROWS_AS(MatrixAlgebra({unit2(0, 0)}), ConfigError);             // no identity
  CHECK_THROWS_AS(MatrixAlgebra({id2, unit2(0, 1)}), ConfigError);        // adjoint escapes
  Matrix sigma3 = Matrix::Zero(2, 2);
  sigma3(0, 0) = 1.0;
  sigma3(1, 1) = -1.0;
  // sigma3 * (E01 + E10) leaves the span: multiplication not closed.
  CHECK_THROWS_AS(MatrixAlgebra({id2, sigma3, unit2(0, 1) + unit2(1, 0)}), ConfigError);
}

TEST_CASE("coordinate arithmetic matches ambient matrix arithmetic") {
  AlgebraContext ctx = make_grouped_diagonal_context(3, {{0}, {1}, {2}});
  const MatrixAlgebra& B = ctx.B;

  Eigen::VectorXcd da(3), db(3);
  da << cdouble(1.0, 2.0), cdouble(-0.5, 0.25), cdouble(0.0, -1.0);
  db << cdouble(2.0, -1.0), cdouble(3.0, 0.5), cdouble(-1.0, 1.0);
  Matrix a = da.asDiagonal();
  Matrix b = db.asDiagonal();

  Coords product = B.mul_coords(B.coords(a), B.coords(b));
  CHECK(entry_distance(B.from_coords(product), a * b) < 1e-12);

  Coords adj = B.adjoint_coords(B.coords(a));
  CHECK(entry_distance(B.from_coords(adj), a.adjoint()) < 1e-12);

  CHECK(entry_distance(B.from_coords(B.identity_coords()), Matrix::Identity(3, 3)) < 1e-12);
  CHECK(B.contains(a));
  Matrix offdiag = Matrix::Zero(3, 3);
  offdiag(0, 1) = 1.0;
  CHECK_FALSE(B.contains(offdiag, 1e-9));
}

TEST_CASE("membership defect distinguishes inside from outside") {
  AlgebraContext ctx = make_grouped_diagonal_context(2, {{0}, {1}});
  Matrix offdiag = unit2(0, 1);
  CHECK(ctx.B.membership_defect(offdiag) > 0.5);
  CHECK(ctx.B.membership_defect(Matrix::Identity(2, 2)) < 1e-12);
}

TEST_CASE("zero-weight coordinates make the base expectation unfaithful") {
  AlgebraContext ctx = make_grouped_diagonal_context(4, {{0, 1}, {2, 3}}, {1.0, 1.0, 1.0, 0.0});
  ContextReport report = check_context(ctx);
  CHECK(report.base_expectation.ok);  // still a conditional expectation
  CHECK_FALSE(report.base_faithful.faithful);
  CHECK_FALSE(report.ok());
  // The witness concentrates on the ignored coordinate.
  REQUIRE(report.base_faithful.witness.size() == 4);
  CHECK(std::abs(report.base_faithful.witness[3]) > 0.9);
}

TEST_CASE("expectation law violations are reported") {
  MatrixAlgebra diag2({unit2(0, 0), unit2(1, 1)});
  auto skew = ConditionalExpectation::from_function(2, diag2, [](const Matrix& m) {
    Matrix out = Matrix::Zero(2, 2);
    out(0, 0) = m(0, 0) + m(1, 1);
    out(1, 1) = m(1, 1);
    return out;
  });
  CheckReport report = check_expectation(skew, elementary_matrices(2));
  CHECK_FALSE(report.ok);
  CHECK(report.max_violation > 0.5);
  CHECK_FALSE(report.failures.empty());
}

TEST_CASE("images escaping the target are rejected at construction") {
  MatrixAlgebra diag2({unit2(0, 0), unit2(1, 1)});
  CHECK_THROWS_AS(
      ConditionalExpectation::from_function(2, diag2, [](const Matrix& m) { return m; }),
      ConfigError);
}

TEST_CASE("diagonal tower is a consistent chain of expectations") {
  TowerContext t = make_diagonal_tower(4, {{0, 1}, {2, 3}});
  for (const Matrix& b : t.small.basis()) CHECK(t.mid.contains(b));
  for (const Matrix& b : t.mid.basis()) CHECK(t.large.contains(b));

  Matrix m = Matrix::Random(4, 4);
  // Expectation onto a smaller level factors through any larger one.
  CHECK(entry_distance(t.to_mid.apply(t.to_large.apply(m)), t.to_mid.apply(m)) < 1e-12);
  CHECK(entry_distance(t.to_small.apply(t.to_mid.apply(m)), t.to_small.apply(m)) < 1e-12);
  CHECK(entry_distance(t.to_small.apply(t.to_large.apply(m)), t.to_small.apply(m)) < 1e-12);
}

TEST_CASE("uneven groups still give a consistent tower") {
  TowerContext t = make_diagonal_tower(5, {{0, 1, 2}, {3, 4}});
  Matrix m = Matrix::Random(5, 5);
  CHECK(entry_distance(t.to_small.apply(t.to_mid.apply(m)), t.to_small.apply(m)) < 1e-12);
}
