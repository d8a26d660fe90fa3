#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "amalgam/core.hpp"

namespace amalgam {

using Matrix = Eigen::MatrixXcd;
using Coords = Eigen::VectorXcd;

/// Column-major flattening of a matrix, the convention used throughout for
/// linear maps acting on matrix entries.
inline Eigen::VectorXcd vectorize(const Matrix& m) {
  return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size());
}

inline double entry_distance(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// The n*n matrix units of the ambient algebra, in column-major order (the
/// unit with a 1 at (i,j) sits at index i + n*j).
inline std::vector<Matrix> elementary_matrices(int n) {
  std::vector<Matrix> units;
  units.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      Matrix u = Matrix::Zero(n, n);
      u(i, j) = 1.0;
      units.push_back(std::move(u));
    }
  return units;
}

/// A unital *-subalgebra of the n x n complex matrices, described by a
/// linearly independent basis. Construction verifies independence, that the
/// identity lies in the span, and closure under products and adjoints; the
/// product and adjoint actions are tabulated on the basis so coordinate
/// arithmetic never touches ambient matrices.
class MatrixAlgebra {
 public:
  MatrixAlgebra() = default;

  explicit MatrixAlgebra(std::vector<Matrix> basis, double tol = kStructuralTol) {
    if (basis.empty()) throw ConfigError("MatrixAlgebra: empty basis");
    ambient_n_ = static_cast<int>(basis.front().rows());
    for (const Matrix& b : basis)
      if (b.rows() != ambient_n_ || b.cols() != ambient_n_)
        throw ConfigError("MatrixAlgebra: basis matrices must be square and equally sized");
    basis_ = std::move(basis);

    const int d = dim();
    const int nn = ambient_n_ * ambient_n_;
    basis_matrix_.resize(nn, d);
    for (int i = 0; i < d; ++i) basis_matrix_.col(i) = vectorize(basis_[static_cast<std::size_t>(i)]);

    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(basis_matrix_);
    cod.setThreshold(tol);
    if (cod.rank() < d) throw ConfigError("MatrixAlgebra: basis is linearly dependent");
    pinv_ = cod.pseudoInverse();

    identity_coords_ = coords(Matrix::Identity(ambient_n_, ambient_n_));
    if (!contains(Matrix::Identity(ambient_n_, ambient_n_), tol))
      throw ConfigError("MatrixAlgebra: identity not in span");

    mul_right_.assign(static_cast<std::size_t>(d), Matrix(d, d));
    mul_left_.assign(static_cast<std::size_t>(d), Matrix(d, d));
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) {
        const Matrix prod = basis_[static_cast<std::size_t>(i)] * basis_[static_cast<std::size_t>(j)];
        if (!contains(prod, tol))
          throw ConfigError("MatrixAlgebra: not closed under multiplication");
        const Coords c = coords(prod);
        mul_right_[static_cast<std::size_t>(j)].col(i) = c;
        mul_left_[static_cast<std::size_t>(i)].col(j) = c;
      }

    adjoint_map_.resize(d, d);
    for (int i = 0; i < d; ++i) {
      const Matrix adj = basis_[static_cast<std::size_t>(i)].adjoint();
      if (!contains(adj, tol)) throw ConfigError("MatrixAlgebra: not closed under adjoints");
      adjoint_map_.col(i) = coords(adj);
    }
  }

  int dim() const { return static_cast<int>(basis_.size()); }
  int ambient_dim() const { return ambient_n_; }
  const std::vector<Matrix>& basis() const { return basis_; }

  /// Least-squares coordinates; exact when the argument lies in the span.
  Coords coords(const Matrix& m) const { return pinv_ * vectorize(m); }

  Matrix from_coords(const Coords& c) const {
    Eigen::VectorXcd flat = basis_matrix_ * c;
    return Eigen::Map<const Matrix>(flat.data(), ambient_n_, ambient_n_);
  }

  bool contains(const Matrix& m, double tol = kStructuralTol) const {
    return membership_defect(m) <= tol;
  }

  /// Entrywise distance from the argument to its projection onto the span.
  double membership_defect(const Matrix& m) const {
    return entry_distance(from_coords(coords(m)), m);
  }

  /// Coordinates of the product of two elements given by coordinates.
  Coords mul_coords(const Coords& a, const Coords& b) const {
    Coords out = Coords::Zero(dim());
    for (int j = 0; j < dim(); ++j) {
      if (b[j] == cdouble(0.0)) continue;
      out.noalias() += b[j] * (mul_right_[static_cast<std::size_t>(j)] * a);
    }
    return out;
  }

  Coords adjoint_coords(const Coords& a) const { return adjoint_map_ * a.conjugate(); }

  /// Matrix of right multiplication by basis element j: coords(x e_j) =
  /// right_mul(j) * coords(x). Likewise left_mul(i) for coords(e_i x).
  const Matrix& right_mul(int j) const { return mul_right_[static_cast<std::size_t>(j)]; }
  const Matrix& left_mul(int i) const { return mul_left_[static_cast<std::size_t>(i)]; }

  const Coords& identity_coords() const { return identity_coords_; }
  const Matrix& basis_matrix() const { return basis_matrix_; }

 private:
  int ambient_n_ = 0;
  std::vector<Matrix> basis_;
  Matrix basis_matrix_;  // (n*n) x dim, columns vectorize the basis
  Matrix pinv_;          // dim x (n*n)
  std::vector<Matrix> mul_right_;  // mul_right_[j].col(i) = coords(e_i e_j)
  std::vector<Matrix> mul_left_;   // mul_left_[i].col(j) = coords(e_i e_j)
  Matrix adjoint_map_;
  Coords identity_coords_;
};

/// A linear map from the ambient n x n matrices into a target subalgebra,
/// stored as the matrix taking vectorized input to target coordinates.
/// Conditional-expectation laws are not assumed here; check_expectation
/// verifies them for a given source.
class ConditionalExpectation {
 public:
  ConditionalExpectation() = default;

  /// Tabulate an arbitrary linear formula on the matrix units. Throws if an
  /// image escapes the target span.
  template <class Fn>
  static ConditionalExpectation from_function(int ambient_n, MatrixAlgebra target, Fn&& fn,
                                              double tol = kStructuralTol) {
    const int nn = ambient_n * ambient_n;
    Matrix kernel(target.dim(), nn);
    int col = 0;
    for (const Matrix& unit : elementary_matrices(ambient_n)) {
      const Matrix image = fn(unit);
      if (!target.contains(image, tol))
        throw ConfigError("ConditionalExpectation: image of a matrix unit escapes the target");
      kernel.col(col++) = target.coords(image);
    }
    return from_kernel(ambient_n, std::move(target), std::move(kernel));
  }

  static ConditionalExpectation from_kernel(int ambient_n, MatrixAlgebra target, Matrix kernel) {
    if (kernel.rows() != target.dim() || kernel.cols() != ambient_n * ambient_n)
      throw ConfigError("ConditionalExpectation: kernel shape mismatch");
    ConditionalExpectation e;
    e.ambient_n_ = ambient_n;
    e.target_ = std::move(target);
    e.kernel_ = std::move(kernel);
    return e;
  }

  int ambient_dim() const { return ambient_n_; }
  const MatrixAlgebra& target() const { return target_; }
  const Matrix& kernel() const { return kernel_; }

  Coords apply_coords(const Matrix& m) const { return kernel_ * vectorize(m); }
  Matrix apply(const Matrix& m) const { return target_.from_coords(apply_coords(m)); }

  /// The map as an endomorphism of vectorized ambient matrices.
  Matrix action_on_vec() const { return target_.basis_matrix() * kernel_; }

 private:
  int ambient_n_ = 0;
  MatrixAlgebra target_;
  Matrix kernel_;
};

/// outer(inner(.)) as a single map; targets compose accordingly.
inline ConditionalExpectation compose(const ConditionalExpectation& outer,
                                      const ConditionalExpectation& inner) {
  if (outer.ambient_dim() != inner.ambient_dim())
    throw ConfigError("compose: ambient dimensions differ");
  return ConditionalExpectation::from_kernel(inner.ambient_dim(), outer.target(),
                                             outer.kernel() * inner.action_on_vec());
}

/// Matrix of a map restricted to a source subalgebra: target coordinates of
/// the image of each source basis element, as columns.
inline Matrix restriction_matrix(const ConditionalExpectation& e, const MatrixAlgebra& source) {
  Matrix r(e.target().dim(), source.dim());
  for (int i = 0; i < source.dim(); ++i) r.col(i) = e.apply_coords(source.basis()[static_cast<std::size_t>(i)]);
  return r;
}

/// Coordinates in the larger algebra of each basis element of the smaller.
inline Matrix inclusion_matrix(const MatrixAlgebra& sub, const MatrixAlgebra& super) {
  Matrix r(super.dim(), sub.dim());
  for (int i = 0; i < sub.dim(); ++i) {
    const Matrix& b = sub.basis()[static_cast<std::size_t>(i)];
    if (!super.contains(b)) throw ConfigError("inclusion_matrix: sub basis element escapes super");
    r.col(i) = super.coords(b);
  }
  return r;
}

/// Orthonormal basis of the (right) null space of a, via SVD. Singular
/// values below tol count as zero.
inline std::vector<Coords> nullspace_basis(const Matrix& a, double tol = kStructuralTol) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  std::vector<Coords> out;
  const auto& sv = svd.singularValues();
  for (int i = 0; i < svd.matrixV().cols(); ++i) {
    const double s = i < sv.size() ? sv[i] : 0.0;
    if (s <= tol) out.push_back(svd.matrixV().col(i));
  }
  return out;
}

/// Accumulated result of a family of identity checks: the worst violation
/// seen, and a description of every check that exceeded its tolerance.
struct CheckReport {
  bool ok = true;
  double max_violation = 0.0;
  std::vector<std::string> failures;

  void record(const std::string& what, double violation, double tol) {
    max_violation = std::max(max_violation, violation);
    if (!(violation <= tol)) {
      ok = false;
      failures.push_back(what + ": violation " + format_double(violation));
    }
  }

  void merge(const CheckReport& other) {
    ok = ok && other.ok;
    max_violation = std::max(max_violation, other.max_violation);
    failures.insert(failures.end(), other.failures.begin(), other.failures.end());
  }
};

/// Verify the conditional-expectation laws of e over a spanning set of its
/// source: unitality, fixing the target, and target-bilinearity. Linearity
/// over the spanning set suffices because e is linear by construction.
inline CheckReport check_expectation(const ConditionalExpectation& e,
                                     const std::vector<Matrix>& source_span,
                                     double tol = kStructuralTol) {
  CheckReport report;
  const int n = e.ambient_dim();
  const Matrix one = Matrix::Identity(n, n);
  report.record("unit is preserved", entry_distance(e.apply(one), one), tol);
  const auto& tbasis = e.target().basis();
  for (std::size_t i = 0; i < tbasis.size(); ++i)
    report.record("target element " + std::to_string(i) + " is fixed",
                  entry_distance(e.apply(tbasis[i]), tbasis[i]), tol);
  for (std::size_t s = 0; s < source_span.size(); ++s) {
    const Matrix mid = e.apply(source_span[s]);
    for (std::size_t i = 0; i < tbasis.size(); ++i)
      for (std::size_t j = 0; j < tbasis.size(); ++j) {
        const Matrix lhs = e.apply(tbasis[i] * source_span[s] * tbasis[j]);
        const Matrix rhs = tbasis[i] * mid * tbasis[j];
        report.record("bilinear over target at source element " + std::to_string(s),
                      entry_distance(lhs, rhs), tol);
      }
  }
  return report;
}

/// Faithfulness of e on a source subalgebra, via the Gram form
/// g(i,j) = tr e(b_i* b_j) / n. For a positive map with the faithful matrix
/// trace downstream, e is faithful on the source iff g is positive
/// definite; a near-null eigenvector is returned as witness otherwise.
struct FaithfulnessReport {
  bool faithful = true;
  double min_eigenvalue = 0.0;
  Coords witness;  // source coordinates; empty when faithful
};

inline FaithfulnessReport check_faithfulness(const ConditionalExpectation& e,
                                             const MatrixAlgebra& source,
                                             double tol = kStructuralTol) {
  const int d = source.dim();
  Matrix gram(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const Matrix& bi = source.basis()[static_cast<std::size_t>(i)];
      const Matrix& bj = source.basis()[static_cast<std::size_t>(j)];
      gram(i, j) = e.apply(bi.adjoint() * bj).trace() / static_cast<double>(e.ambient_dim());
    }
  Eigen::SelfAdjointEigenSolver<Matrix> eig((gram + gram.adjoint()) / 2.0);
  FaithfulnessReport report;
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  if (report.min_eigenvalue <= tol) {
    report.faithful = false;
    int arg = 0;
    eig.eigenvalues().minCoeff(&arg);
    report.witness = eig.eigenvectors().col(arg);
  }
  return report;
}

/// The full working frame: the ambient matrices M, a coefficient subalgebra
/// B with expectation E : M -> B, and a base subalgebra D inside B with
/// expectation F onto it (F is stored as a map on all of M via its defining
/// formula; its laws are only claimed over B).
struct AlgebraContext {
  int ambient_n = 0;
  MatrixAlgebra B;
  MatrixAlgebra D;
  ConditionalExpectation E;  // M -> B
  ConditionalExpectation F;  // B -> D
};

struct ContextReport {
  CheckReport inclusions;
  CheckReport coefficient_expectation;  // E over all of M
  CheckReport base_expectation;         // F over B
  FaithfulnessReport base_faithful;     // F on B

  bool ok() const {
    return inclusions.ok && coefficient_expectation.ok && base_expectation.ok &&
           base_faithful.faithful;
  }
};

inline ContextReport check_context(const AlgebraContext& ctx, double tol = kStructuralTol) {
  ContextReport report;
  for (std::size_t i = 0; i < ctx.D.basis().size(); ++i)
    report.inclusions.record("base basis element " + std::to_string(i) + " lies in coefficients",
                             ctx.B.membership_defect(ctx.D.basis()[i]), tol);
  report.coefficient_expectation =
      check_expectation(ctx.E, elementary_matrices(ctx.ambient_n), tol);
  report.base_expectation = check_expectation(ctx.F, ctx.B.basis(), tol);
  report.base_faithful = check_faithfulness(ctx.F, ctx.B, tol);
  return report;
}

/// Context with block-diagonal coefficients over C^N (N = sum of sizes):
/// E compresses to the diagonal blocks, the base algebra is the scalars,
/// and F is the weight-averaged normalized block trace. All weights must be
/// positive for F to be faithful; they default to 1.
inline AlgebraContext make_block_diagonal_context(const std::vector<int>& block_sizes,
                                                  std::vector<double> weights = {}) {
  if (block_sizes.empty()) throw ConfigError("make_block_diagonal_context: no blocks");
  if (weights.empty()) weights.assign(block_sizes.size(), 1.0);
  if (weights.size() != block_sizes.size())
    throw ConfigError("make_block_diagonal_context: one weight per block required");
  int n = 0;
  for (int s : block_sizes) {
    if (s <= 0) throw ConfigError("make_block_diagonal_context: block sizes must be positive");
    n += s;
  }

  std::vector<Matrix> b_basis;
  std::vector<std::pair<int, int>> extents;  // (offset, size)
  double weight_mass = 0.0;
  int offset = 0;
  for (std::size_t k = 0; k < block_sizes.size(); ++k) {
    const int s = block_sizes[k];
    extents.emplace_back(offset, s);
    weight_mass += weights[k] * s;
    for (int j = 0; j < s; ++j)
      for (int i = 0; i < s; ++i) {
        Matrix u = Matrix::Zero(n, n);
        u(offset + i, offset + j) = 1.0;
        b_basis.push_back(std::move(u));
      }
    offset += s;
  }

  AlgebraContext ctx;
  ctx.ambient_n = n;
  ctx.B = MatrixAlgebra(std::move(b_basis));
  ctx.D = MatrixAlgebra({Matrix::Identity(n, n)});

  ctx.E = ConditionalExpectation::from_function(n, ctx.B, [&](const Matrix& m) {
    Matrix out = Matrix::Zero(n, n);
    for (const auto& [off, s] : extents) out.block(off, off, s, s) = m.block(off, off, s, s);
    return out;
  });
  ctx.F = ConditionalExpectation::from_function(n, ctx.D, [&](const Matrix& m) {
    cdouble acc = 0.0;
    for (std::size_t k = 0; k < extents.size(); ++k)
      acc += weights[k] * m.block(extents[k].first, extents[k].first, extents[k].second,
                                  extents[k].second)
                              .trace();
    return Matrix(acc / weight_mass * Matrix::Identity(n, n));
  });
  return ctx;
}

/// Context with diagonal coefficients over C^n: E extracts the diagonal,
/// the base algebra holds diagonals constant on each listed group of
/// coordinates (groups partition 0..n-1), and F averages within groups
/// using the per-coordinate weights (default 1, all must be positive for
/// faithfulness).
inline AlgebraContext make_grouped_diagonal_context(int n,
                                                    const std::vector<std::vector<int>>& groups,
                                                    std::vector<double> weights = {}) {
  if (n <= 0) throw ConfigError("make_grouped_diagonal_context: n must be positive");
  if (weights.empty()) weights.assign(static_cast<std::size_t>(n), 1.0);
  if (static_cast<int>(weights.size()) != n)
    throw ConfigError("make_grouped_diagonal_context: one weight per coordinate required");
  std::vector<int> group_of(static_cast<std::size_t>(n), -1);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int i : groups[g]) {
      if (i < 0 || i >= n || group_of[static_cast<std::size_t>(i)] != -1)
        throw ConfigError("make_grouped_diagonal_context: groups must partition the coordinates");
      group_of[static_cast<std::size_t>(i)] = static_cast<int>(g);
    }
  for (int g : group_of)
    if (g == -1) throw ConfigError("make_grouped_diagonal_context: groups must cover all coordinates");

  std::vector<Matrix> b_basis;
  for (int i = 0; i < n; ++i) {
    Matrix u = Matrix::Zero(n, n);
    u(i, i) = 1.0;
    b_basis.push_back(std::move(u));
  }
  std::vector<Matrix> d_basis;
  for (const auto& group : groups) {
    Matrix u = Matrix::Zero(n, n);
    for (int i : group) u(i, i) = 1.0;
    d_basis.push_back(std::move(u));
  }

  AlgebraContext ctx;
  ctx.ambient_n = n;
  ctx.B = MatrixAlgebra(std::move(b_basis));
  ctx.D = MatrixAlgebra(std::move(d_basis));

  ctx.E = ConditionalExpectation::from_function(n, ctx.B, [&](const Matrix& m) {
    return Matrix(m.diagonal().asDiagonal());
  });
  ctx.F = ConditionalExpectation::from_function(n, ctx.D, [&](const Matrix& m) {
    Matrix out = Matrix::Zero(n, n);
    for (const auto& group : groups) {
      cdouble acc = 0.0;
      double mass = 0.0;
      for (int i : group) {
        acc += weights[static_cast<std::size_t>(i)] * m(i, i);
        mass += weights[static_cast<std::size_t>(i)];
      }
      for (int i : group) out(i, i) = acc / mass;
    }
    return out;
  });
  return ctx;
}

/// Three nested diagonal subalgebras over C^n — scalars inside
/// group-constant diagonals inside all diagonals — with the expectation
/// from the ambient matrices onto each level. Used to exercise results
/// about towers of subalgebras.
struct TowerContext {
  int ambient_n = 0;
  MatrixAlgebra small;   // scalars
  MatrixAlgebra mid;     // diagonals constant on each group
  MatrixAlgebra large;   // all diagonals
  ConditionalExpectation to_small;
  ConditionalExpectation to_mid;
  ConditionalExpectation to_large;
};

inline TowerContext make_diagonal_tower(int n, const std::vector<std::vector<int>>& groups) {
  AlgebraContext grouped = make_grouped_diagonal_context(n, groups);
  TowerContext t;
  t.ambient_n = n;
  t.small = MatrixAlgebra({Matrix::Identity(n, n)});
  t.mid = grouped.D;
  t.large = grouped.B;
  t.to_large = grouped.E;
  t.to_mid = compose(grouped.F, grouped.E);
  t.to_small = ConditionalExpectation::from_function(n, t.small, [&](const Matrix& m) {
    return Matrix(m.trace() / static_cast<double>(n) * Matrix::Identity(n, n));
  });
  return t;
}

}  // namespace amalgam
