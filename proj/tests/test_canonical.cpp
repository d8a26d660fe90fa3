#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <vector>

#include "amalgam/canonical.hpp"
#include "amalgam/rng.hpp"

using namespace amalgam;

namespace {

PrescribedCumulants scalar_prescribed(const std::vector<double>& k, int level_cap = -1) {
  AlgebraContext ctx = make_block_diagonal_context({1});
  CumulantSeries s(ctx.B, 1, static_cast<int>(k.size()));
  for (int i = 1; i <= s.order_cap(); ++i) s.order_data(i)(0, 0) = k[static_cast<std::size_t>(i - 1)];
  return PrescribedCumulants(std::move(s), level_cap);
}

double scalar_moment(const PrescribedCumulants& pc, int order) {
  CanonicalMomentMap map(pc);
  std::vector<int> idx(static_cast<std::size_t>(order), 0);
  std::vector<Coords> cs(static_cast<std::size_t>(order), Coords::Ones(1));
  return map.eval(idx, cs)(0).real();
}

Coords random_coords(GaussianStream& g, int d) {
  Coords c(d);
  for (int i = 0; i < d; ++i) c(i) = cdouble(g.normal(), g.normal());
  return c;
}

PrescribedCumulants random_prescribed(const MatrixAlgebra& B, int n_vars, int cap,
                                      std::uint64_t seed, int level_cap = -1) {
  CumulantSeries s(B, n_vars, cap);
  GaussianStream g(seed);
  s.fill_random(g, 0.5);
  return PrescribedCumulants(std::move(s), level_cap);
}

FormalWord make_word(const std::vector<Coords>& coeffs, const std::vector<GeneratorSymbol>& gens) {
  FormalWord w;
  w.coeffs = coeffs;
  w.gens = gens;
  return w;
}

}  // namespace

TEST_CASE("a star run followed by its matching ladder absorbs into a cumulant") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  PrescribedCumulants pc = random_prescribed(ctx.B, 2, 3, 11);
  const MatrixAlgebra& B = ctx.B;
  GaussianStream g(12);
  const Coords a0 = random_coords(g, 2), b = random_coords(g, 2), c = random_coords(g, 2);

  // a0 star_0 b ladder_0^1 c  ->  a0 * k_{00}(b) * c
  FormalWord w = make_word({a0, b, c}, {star(0), ladder(0, 1)});
  FormalWord nf = reduce(w, pc);
  REQUIRE(nf.gens.empty());
  const std::vector<int> idx{0, 0};
  const std::vector<Coords> args{b};
  const Coords want = B.mul_coords(B.mul_coords(a0, pc.series.eval_interior(idx, args)), c);
  CHECK((nf.coeffs.front() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a two-star run feeds both variables into one cumulant") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  PrescribedCumulants pc = random_prescribed(ctx.B, 2, 3, 21);
  GaussianStream g(22);
  const Coords one = ctx.B.identity_coords();
  const Coords b1 = random_coords(g, 2), b2 = random_coords(g, 2);

  // star_0 b1 star_1 b2 ladder_1^2  ->  k_{011}(b1, b2)
  FormalWord w = make_word({one, b1, b2, one}, {star(0), star(1), ladder(1, 2)});
  FormalWord nf = reduce(w, pc);
  REQUIRE(nf.gens.empty());
  const std::vector<int> idx{0, 1, 1};
  const std::vector<Coords> args{b1, b2};
  CHECK((nf.coeffs.front() - pc.series.eval_interior(idx, args)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("nested ladders reduce inside out") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  PrescribedCumulants pc = random_prescribed(ctx.B, 2, 3, 31);
  const MatrixAlgebra& B = ctx.B;
  GaussianStream g(32);
  const Coords a0 = random_coords(g, 2), a = random_coords(g, 2), b = random_coords(g, 2);
  const Coords c = random_coords(g, 2), d = random_coords(g, 2);

  // a0 star_0 a star_1 b ladder_1^1 c ladder_0^1 d
  FormalWord w =
      make_word({a0, a, b, c, d}, {star(0), star(1), ladder(1, 1), ladder(0, 1)});
  FormalWord nf = reduce(w, pc);
  REQUIRE(nf.gens.empty());

  const std::vector<int> inner_idx{1, 1};
  const std::vector<Coords> inner_args{b};
  const Coords inner = pc.series.eval_interior(inner_idx, inner_args);
  const Coords mid = B.mul_coords(B.mul_coords(a, inner), c);
  const std::vector<int> outer_idx{0, 0};
  const std::vector<Coords> outer_args{mid};
  const Coords want =
      B.mul_coords(B.mul_coords(a0, pc.series.eval_interior(outer_idx, outer_args)), d);
  CHECK((nf.coeffs.front() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("irreducible words have zero expectation") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  PrescribedCumulants pc = random_prescribed(ctx.B, 2, 3, 41);
  const Coords one = ctx.B.identity_coords();

  const std::vector<FormalWord> stuck = {
      make_word({one, one}, {star(0)}),                            // lone star
      make_word({one, one}, {ladder(0, 1)}),                       // lone ladder
      make_word({one, one, one}, {star(0), ladder(1, 2)}),         // level too deep
      make_word({one, one, one}, {ladder(0, 1), star(0)}),         // star after ladder
      make_word({one, one, one, one}, {star(0), ladder(0, 2), star(1)}),
  };
  for (const FormalWord& w : stuck) {
    CHECK(expectation(FormalElement{{w}}, pc).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_FALSE(reduce(w, pc).gens.empty());
  }
}

TEST_CASE("the truncated variable lists star, constant, and every ladder level") {
  PrescribedCumulants pc = scalar_prescribed({0.4, 1.0, 0.2, 0.1});
  REQUIRE(pc.truncation == 3);
  FormalElement y = variable_y(0, pc);
  REQUIRE(y.words.size() == 5);  // star + constant + ladders 1..3
  CHECK(std::abs(expectation(y, pc)(0) - cdouble(0.4)) < 1e-14);  // E(Y) = k1
}

TEST_CASE("a pure second cumulant yields Catalan moments of the model") {
  PrescribedCumulants pc = scalar_prescribed({0.0, 1.0, 0.0, 0.0, 0.0, 0.0});
  REQUIRE(pc.truncation == 5);
  CHECK(std::abs(scalar_moment(pc, 1)) < 1e-12);
  CHECK(std::abs(scalar_moment(pc, 2) - 1.0) < 1e-12);
  CHECK(std::abs(scalar_moment(pc, 3)) < 1e-12);
  CHECK(std::abs(scalar_moment(pc, 4) - 2.0) < 1e-12);
  CHECK(std::abs(scalar_moment(pc, 5)) < 1e-12);
  CHECK(std::abs(scalar_moment(pc, 6) - 5.0) < 1e-12);
}

TEST_CASE("low scalar moments of the model match the classic cumulant formulas") {
  const double k1 = 0.3, k2 = 1.2, k3 = -0.7;
  PrescribedCumulants pc = scalar_prescribed({k1, k2, k3, 0.0});
  CHECK(std::abs(scalar_moment(pc, 1) - k1) < 1e-12);
  CHECK(std::abs(scalar_moment(pc, 2) - (k2 + k1 * k1)) < 1e-12);
  CHECK(std::abs(scalar_moment(pc, 3) - (k3 + 3 * k1 * k2 + k1 * k1 * k1)) < 1e-12);
}

TEST_CASE("the walk-based moment map agrees with explicit word expansion") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  const MatrixAlgebra& B = ctx.B;
  PrescribedCumulants pc = random_prescribed(B, 2, 4, 51, 3);
  CanonicalMomentMap map(pc);
  GaussianStream g(52);
  std::uint64_t pick = 53;

  for (int order = 1; order <= 4; ++order) {
    for (int rep = 0; rep < 6; ++rep) {
      std::vector<int> idx;
      std::vector<Coords> cs;
      for (int t = 0; t < order; ++t) {
        idx.push_back(static_cast<int>(splitmix64(pick) % 2));
        cs.push_back(random_coords(g, 2));
      }
      // spec-level path: distribute the product of full variables, then reduce
      FormalElement prod = algebra_element(B.identity_coords());
      for (int t = 0; t < order; ++t) {
        prod = mul(prod, scale_right(variable_y(idx[static_cast<std::size_t>(t)], pc),
                                     cs[static_cast<std::size_t>(t)], B),
                   B);
      }
      const Coords slow = expectation(prod, pc);
      const Coords fast = map.eval(idx, cs);
      CHECK((slow - fast).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("moments of the model return the prescribed cumulants") {
  GaussianStream seeds(61);
  // diagonal 3x3 coefficients, two variables
  AlgebraContext d3 = make_block_diagonal_context({1, 1, 1});
  PrescribedCumulants pc1 = random_prescribed(d3.B, 2, 4, 62);
  MomentSeries m1 = canonical_moment_series(pc1, 4);
  CHECK(max_series_distance(cumulants_from_moments(m1), pc1.series) < 1e-9);

  // a 2x2 full block plus a scalar block, one variable, order 5
  AlgebraContext b21 = make_block_diagonal_context({2, 1});
  PrescribedCumulants pc2 = random_prescribed(b21.B, 1, 5, 63);
  MomentSeries m2 = canonical_moment_series(pc2, 5);
  CHECK(max_series_distance(cumulants_from_moments(m2), pc2.series) < 1e-9);
}

TEST_CASE("reduction order does not change the normal form") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  const MatrixAlgebra& B = ctx.B;
  PrescribedCumulants pc = random_prescribed(B, 2, 4, 71, 3);
  GaussianStream g(72);
  std::uint64_t pick = 73;

  int branchy = 0;  // words that ever offered a choice of redex
  for (int rep = 0; rep < 1500; ++rep) {
    const int r = 3 + static_cast<int>(splitmix64(pick) % 7);
    FormalWord w;
    w.coeffs.push_back(random_coords(g, 2));
    for (int t = 0; t < r; ++t) {
      const int var = static_cast<int>(splitmix64(pick) % 2);
      if (splitmix64(pick) % 100 < 60)
        w.gens.push_back(star(var));
      else
        w.gens.push_back(ladder(var, 1 + static_cast<int>(splitmix64(pick) % 2)));
      w.coeffs.push_back(random_coords(g, 2));
    }

    const FormalWord leftmost = reduce(w, pc);
    FormalWord shuffled = w;
    for (;;) {
      const std::vector<int> rx = find_redexes(shuffled);
      if (rx.empty()) break;
      if (rx.size() > 1) ++branchy;
      apply_redex(shuffled, rx[splitmix64(pick) % rx.size()], pc);
    }

    REQUIRE(leftmost.gens == shuffled.gens);
    REQUIRE(leftmost.coeffs.size() == shuffled.coeffs.size());
    for (std::size_t i = 0; i < leftmost.coeffs.size(); ++i)
      CHECK((leftmost.coeffs[i] - shuffled.coeffs[i]).cwiseAbs().maxCoeff() < 1e-9);
  }
  // the sample must actually exercise competing redexes
  CHECK(branchy >= 100);
}

TEST_CASE("moments below the truncation level are exact, above it they are not") {
  const std::vector<double> k{0.0, 1.0, 0.0, 0.8};
  PrescribedCumulants low = scalar_prescribed(k, 2);
  PrescribedCumulants high = scalar_prescribed(k, 3);

  // orders up to L+1 agree between the two truncations
  for (int order = 1; order <= 3; ++order)
    CHECK(std::abs(scalar_moment(low, order) - scalar_moment(high, order)) < 1e-12);

  // at order 4 the missing level-3 ladder drops the k4 term
  CHECK(std::abs(scalar_moment(high, 4) - 2.8) < 1e-12);
  CHECK(std::abs(scalar_moment(low, 4) - 2.0) < 1e-12);
}

TEST_CASE("the expectation is bilinear over the coefficient algebra") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  const MatrixAlgebra& B = ctx.B;
  PrescribedCumulants pc = random_prescribed(B, 2, 4, 81, 3);
  GaussianStream g(82);
  const Coords bl = random_coords(g, 2), br = random_coords(g, 2);

  FormalElement x = mul(variable_y(0, pc), variable_y(1, pc), B);
  x = add(std::move(x), scale_left(random_coords(g, 2), variable_y(0, pc), B));

  const Coords direct = expectation(mul(mul(algebra_element(bl), x, B), algebra_element(br), B), pc);
  const Coords framed = B.mul_coords(B.mul_coords(bl, expectation(x, pc)), br);
  CHECK((direct - framed).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("element normalization merges equal words and drops cancellations") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  const MatrixAlgebra& B = ctx.B;
  const Coords one = B.identity_coords();

  FormalElement x = generator_element(star(0), B);
  x = add(std::move(x), scale_left(2.0 * one, generator_element(star(0), B), B));
  normalize(x);
  REQUIRE(x.words.size() == 1);
  CHECK((x.words.front().coeffs.front() - 3.0 * one).cwiseAbs().maxCoeff() < 1e-12);

  FormalElement y = generator_element(ladder(1, 2), B);
  y = add(std::move(y), scale_left(-one, generator_element(ladder(1, 2), B), B));
  normalize(y);
  CHECK(y.words.empty());

  // interior coefficients distinguish words
  FormalWord w1 = make_word({one, one, one}, {star(0), ladder(0, 1)});
  FormalWord w2 = make_word({one, 2.0 * one, one}, {star(0), ladder(0, 1)});
  FormalElement z{{w1, w2}};
  normalize(z);
  CHECK(z.words.size() == 2);
}

TEST_CASE("products concatenate words and multiply boundary coefficients") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  const MatrixAlgebra& B = ctx.B;
  GaussianStream g(91);
  const Coords b1 = random_coords(g, 2), b2 = random_coords(g, 2);
  const Coords b3 = random_coords(g, 2), b4 = random_coords(g, 2);

  FormalElement lhs{{make_word({b1, b2}, {star(0)})}};
  FormalElement rhs{{make_word({b3, b4}, {ladder(1, 1)})}};
  FormalElement prod = mul(lhs, rhs, B);
  REQUIRE(prod.words.size() == 1);
  const FormalWord& w = prod.words.front();
  REQUIRE(w.gens.size() == 2);
  CHECK(w.gens[0] == star(0));
  CHECK(w.gens[1] == ladder(1, 1));
  REQUIRE(w.coeffs.size() == 3);
  CHECK((w.coeffs[1] - B.mul_coords(b2, b3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("left coefficients factor out of canonical moments") {
  AlgebraContext ctx = make_block_diagonal_context({1, 1});
  PrescribedCumulants pc = random_prescribed(ctx.B, 2, 4, 95);
  CanonicalMomentMap map(pc);
  GaussianStream g(96);
  const Coords left = random_coords(g, 2);
  const std::vector<int> idx{0, 1, 0};
  const std::vector<Coords> cs{random_coords(g, 2), random_coords(g, 2), random_coords(g, 2)};
  const Coords via_helper = canonical_moment(pc, left, idx, cs);
  const Coords by_hand = ctx.B.mul_coords(left, map.eval(idx, cs));
  CHECK((via_helper - by_hand).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("canonical model guards reject bad input") {
  AlgebraContext ctx = make_block_diagonal_context({1});
  CumulantSeries shallow(ctx.B, 1, 3);
  CHECK_THROWS_AS(PrescribedCumulants(std::move(shallow), 3), ConfigError);

  PrescribedCumulants pc = scalar_prescribed({0.0, 1.0, 0.0}, 2);
  const Coords one = Coords::Ones(1);
  // ladder level above the truncation cap
  FormalWord deep = make_word({one, one}, {ladder(0, 3)});
  CHECK_THROWS_AS(reduce(deep, pc), SizeLimitError);
  // unknown variable
  FormalWord alien = make_word({one, one}, {star(4)});
  CHECK_THROWS_AS(reduce(alien, pc), ConfigError);
  CHECK_THROWS_AS(variable_y(1, pc), ConfigError);

  // expansion guard: (L+2)^order crosses the word cap
  PrescribedCumulants wide = scalar_prescribed({0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
  REQUIRE(wide.truncation == 7);
  CanonicalMomentMap map(wide);
  std::vector<int> idx(7, 0);
  std::vector<Coords> cs(7, one);
  CHECK_THROWS_AS(map.eval(idx, cs), SizeLimitError);
}
