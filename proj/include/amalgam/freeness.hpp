#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "amalgam/algebra.hpp"
#include "amalgam/canonical.hpp"
#include "amalgam/core.hpp"
#include "amalgam/nc_partitions.hpp"
#include "amalgam/rng.hpp"
#include "amalgam/series.hpp"

namespace amalgam {

/// Three-way outcome: clean pass, clear failure, or a value inside the gap
/// between the pass tolerance and the detection threshold.
enum class Verdict { kPass, kFail, kInconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    default: return "inconclusive";
  }
}

inline Verdict classify(double value, double pass_tol, double detect_tol) {
  if (value < pass_tol) return Verdict::kPass;
  if (value >= detect_tol) return Verdict::kFail;
  return Verdict::kInconclusive;
}

/// The action of an expectation on the coordinates of an algebra it
/// preserves: column j holds the coordinates of the image of basis j.
inline Matrix coefficient_action(const ConditionalExpectation& e, const MatrixAlgebra& a,
                                 double tol = kStructuralTol) {
  Matrix m(a.dim(), a.dim());
  for (int j = 0; j < a.dim(); ++j) {
    const Matrix img = e.apply(a.basis()[static_cast<std::size_t>(j)]);
    if (a.membership_defect(img) > tol)
      throw ConfigError("coefficient_action: expectation image escapes the algebra");
    m.col(j) = a.coords(img);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Factorization of a cumulant series through a smaller algebra
// ---------------------------------------------------------------------------

struct FactorizationReport {
  bool pass = true;
  double max_deviation = 0.0;
  double tolerance = kStructuralTol;
  std::vector<double> per_order;  // index k-1
  int worst_order = 0;
  std::vector<int> worst_vars;
  std::vector<int> worst_args;
};

/// Compares every stored cumulant against its conjugation by the
/// expectation: value(args) versus P(value(P args)) where P is the action
/// of e on the coefficient algebra. Basis argument tuples suffice by
/// multilinearity.
inline FactorizationReport check_factorization(const CumulantSeries& series,
                                               const ConditionalExpectation& e, int order_max,
                                               double tol = kStructuralTol) {
  if (order_max < 1 || order_max > series.order_cap())
    throw SizeLimitError("check_factorization: order beyond the stored cap");
  const MatrixAlgebra& B = series.algebra();
  const int d = B.dim();
  const Matrix P = coefficient_action(e, B);

  FactorizationReport report;
  report.tolerance = tol;
  std::vector<Coords> args;
  for (int k = 1; k <= order_max; ++k) {
    double order_worst = 0.0;
    detail::for_each_tuple(series.n_vars(), k, [&](std::span<const int> vars) {
      detail::for_each_tuple(d, k - 1, [&](std::span<const int> basis) {
        args.clear();
        for (int t : basis) args.push_back(P.col(t));
        const Coords inner = series.eval_interior(vars, args);
        const Coords rhs = P * inner;
        const Coords lhs = series.value(vars, basis);
        const double dev = (lhs - rhs).cwiseAbs().maxCoeff();
        if (dev > report.max_deviation) {
          report.max_deviation = dev;
          report.worst_order = k;
          report.worst_vars.assign(vars.begin(), vars.end());
          report.worst_args.assign(basis.begin(), basis.end());
        }
        order_worst = std::max(order_worst, dev);
      });
    });
    report.per_order.push_back(order_worst);
  }
  report.pass = report.max_deviation < tol;
  return report;
}

// ---------------------------------------------------------------------------
// Lifting base-valued cumulants to the coefficient algebra
// ---------------------------------------------------------------------------

/// Precomposes a base-valued cumulant series with the expectation onto the
/// base: k_B(b...) = k_D(F(b)...), included back into the coefficient
/// algebra. The canonical family built from the result is free from the
/// coefficient algebra over the base.
inline PrescribedCumulants lift_free_variables(const CumulantSeries& d_series,
                                               const AlgebraContext& ctx,
                                               double tol = kStructuralTol) {
  const MatrixAlgebra& D = d_series.algebra();
  if (D.dim() != ctx.D.dim() || D.ambient_dim() != ctx.D.ambient_dim())
    throw ConfigError("lift_free_variables: series algebra does not match the base");
  for (int i = 0; i < D.dim(); ++i)
    if (entry_distance(D.basis()[static_cast<std::size_t>(i)],
                       ctx.D.basis()[static_cast<std::size_t>(i)]) > tol)
      throw ConfigError("lift_free_variables: series algebra does not match the base");

  const Matrix rF = restriction_matrix(ctx.F, ctx.B);   // B coords -> D coords of F
  const Matrix inc = inclusion_matrix(ctx.D, ctx.B);    // D coords -> B coords
  const int d = ctx.B.dim();
  CumulantSeries lifted(ctx.B, d_series.n_vars(), d_series.order_cap());
  std::vector<Coords> args;
  for (int k = 1; k <= lifted.order_cap(); ++k) {
    detail::for_each_tuple(lifted.n_vars(), k, [&](std::span<const int> vars) {
      detail::for_each_tuple(d, k - 1, [&](std::span<const int> basis) {
        args.clear();
        for (int t : basis) args.push_back(rF.col(t));
        lifted.value(vars, basis) = inc * d_series.eval_interior(vars, args);
      });
    });
  }
  return PrescribedCumulants(std::move(lifted));
}

// ---------------------------------------------------------------------------
// Direct freeness oracle
// ---------------------------------------------------------------------------

struct FreenessReport {
  Verdict verdict = Verdict::kPass;
  double max_norm = 0.0;
  double pass_tol = kOraclePassTol;
  double detect_tol = kDetectionTol;
  long long words_tested = 0;
  std::string worst_word;
};

namespace detail {

/// One monomial in the variables with base elements between the factors,
/// together with its centering value F(E(monomial)).
struct OracleMonomial {
  std::vector<int> vars;
  std::vector<Coords> mids;  // size vars.size() - 1, in coefficient coords
  Coords center;             // in coefficient coords
  std::string label;
};

/// Evaluator for alternating products b_0 (m_1 - c_1) b_1 ... (m_s - c_s)
/// b_s: the centering terms expand distributively, each resolved term is a
/// plain moment with merged coefficients.
class OracleEvaluator {
 public:
  OracleEvaluator(const MomentSeries& moments, const Matrix& P)
      : moments_(&moments), B_(&moments.algebra()), P_(&P) {}

  /// F(E(word)) in coefficient coordinates; afters has one entry per factor
  /// (the base element following it, the last being the right boundary).
  Coords value(const Coords& lead, std::span<const OracleMonomial* const> factors,
               std::span<const Coords> afters) {
    acc_ = Coords::Zero(B_->dim());
    vars_.clear();
    rights_.clear();
    expand(0, factors, afters, lead);
    return (*P_) * acc_;
  }

 private:
  void expand(std::size_t j, std::span<const OracleMonomial* const> factors,
              std::span<const Coords> afters, const Coords& head) {
    if (j == factors.size()) {
      if (vars_.empty())
        acc_ += head;
      else
        acc_ += B_->mul_coords(head, moments_->eval(vars_, rights_));
      return;
    }
    const OracleMonomial& m = *factors[j];
    const Coords& after = afters[j];

    // keep the monomial: its variables and mid coefficients join the word
    const std::size_t nv = vars_.size();
    for (std::size_t t = 0; t < m.vars.size(); ++t) {
      vars_.push_back(m.vars[t]);
      rights_.push_back(t + 1 < m.vars.size() ? m.mids[t] : after);
    }
    expand(j + 1, factors, afters, head);
    vars_.resize(nv);
    rights_.resize(nv);

    // take the centering term: -center * after merges to the left
    const Coords w = B_->mul_coords(-m.center, after);
    if (vars_.empty()) {
      expand(j + 1, factors, afters, B_->mul_coords(head, w));
    } else {
      const Coords saved = rights_.back();
      rights_.back() = B_->mul_coords(saved, w);
      expand(j + 1, factors, afters, head);
      rights_.back() = saved;
    }
  }

  const MomentSeries* moments_;
  const MatrixAlgebra* B_;
  const Matrix* P_;
  Coords acc_;
  std::vector<int> vars_;
  std::vector<Coords> rights_;
};

}  // namespace detail

/// Tests the definition of freeness with amalgamation over the base
/// directly, with no cumulants involved: F∘E of every alternating word
/// b_0 w_1 b_1 ... w_s b_s must vanish when the w_j are centered monomials
/// in the variables and the base, and the interior b_j are centered
/// coefficient elements. Enumerates all patterns with at most three factors
/// and monomial length at most two, then adds random longer samples.
inline FreenessReport freeness_oracle(const MomentSeries& moments, const AlgebraContext& ctx,
                                      int max_order, std::uint64_t seed,
                                      int random_samples = 200,
                                      double pass_tol = kOraclePassTol,
                                      double detect_tol = kDetectionTol) {
  if (max_order < 1 || max_order > 6) throw SizeLimitError("freeness_oracle: order beyond 6");
  if (moments.order_cap() < max_order)
    throw SizeLimitError("freeness_oracle: moment series stored too shallow");
  const MatrixAlgebra& B = moments.algebra();
  if (B.dim() != ctx.B.dim() || B.ambient_dim() != ctx.B.ambient_dim())
    throw ConfigError("freeness_oracle: moment series is not over the context coefficients");
  const int d = B.dim();
  const int n = moments.n_vars();

  const Matrix rF = restriction_matrix(ctx.F, ctx.B);
  const Matrix inc = inclusion_matrix(ctx.D, ctx.B);
  const Matrix P = inc * rF;  // F as a projection of the coefficient algebra
  const std::vector<Coords> kernel = nullspace_basis(rF);

  // centered-monomial pool: single variables, and variable pairs with a
  // base basis element between them
  std::vector<detail::OracleMonomial> pool;
  const auto finish_monomial = [&](detail::OracleMonomial&& m) {
    std::vector<Coords> cs = m.mids;
    cs.push_back(B.identity_coords());
    m.center = P * moments.eval(m.vars, cs);
    pool.push_back(std::move(m));
  };
  for (int i = 0; i < n; ++i) {
    detail::OracleMonomial m;
    m.vars = {i};
    m.label = "X" + std::to_string(i);
    finish_monomial(std::move(m));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int t = 0; t < ctx.D.dim(); ++t) {
        detail::OracleMonomial m;
        m.vars = {i, j};
        m.mids = {inc.col(t)};
        m.label = "X" + std::to_string(i) + ".d" + std::to_string(t) + ".X" + std::to_string(j);
        finish_monomial(std::move(m));
      }

  // boundary pool: identity plus the kernel basis
  std::vector<Coords> boundary{B.identity_coords()};
  boundary.insert(boundary.end(), kernel.begin(), kernel.end());
  std::vector<std::string> boundary_label{"1"};
  for (std::size_t i = 0; i < kernel.size(); ++i)
    boundary_label.push_back("b" + std::to_string(i));

  detail::OracleEvaluator eval(moments, P);
  FreenessReport report;
  report.pass_tol = pass_tol;
  report.detect_tol = detect_tol;

  const auto try_word = [&](const Coords& lead,
                            const std::vector<const detail::OracleMonomial*>& factors,
                            const std::vector<Coords>& afters, const std::string& label) {
    const Coords v = eval.value(lead, factors, afters);
    const double norm = v.cwiseAbs().maxCoeff();
    ++report.words_tested;
    if (norm > report.max_norm) {
      report.max_norm = norm;
      report.worst_word = label;
    }
  };

  // exhaustive layer: s <= 3 factors, monomial length <= 2
  const int s_max = std::min(3, max_order);
  std::vector<const detail::OracleMonomial*> factors;
  std::vector<Coords> afters;
  for (int s = 1; s <= s_max; ++s) {
    if (s >= 2 && kernel.empty()) break;  // no admissible interior elements
    std::vector<std::size_t> mono_idx(static_cast<std::size_t>(s), 0);
    for (;;) {
      int total = 0;
      for (std::size_t v : mono_idx) total += static_cast<int>(pool[v].vars.size());
      if (total <= max_order) {
        std::vector<std::size_t> inner_idx(static_cast<std::size_t>(s - 1), 0);
        for (;;) {
          for (std::size_t l = 0; l < boundary.size(); ++l)
            for (std::size_t r = 0; r < boundary.size(); ++r) {
              factors.clear();
              afters.clear();
              std::string label = boundary_label[l];
              for (int j = 0; j < s; ++j) {
                factors.push_back(&pool[mono_idx[static_cast<std::size_t>(j)]]);
                label += " (" + factors.back()->label + "-c)";
                if (j + 1 < s) {
                  const std::size_t bi = inner_idx[static_cast<std::size_t>(j)];
                  afters.push_back(kernel[bi]);
                  label += " kb" + std::to_string(bi);
                }
              }
              afters.push_back(boundary[r]);
              label += " " + boundary_label[r];
              try_word(boundary[l], factors, afters, label);
            }
          // odometer over the interior kernel choices
          std::size_t pos = 0;
          while (pos < inner_idx.size() && ++inner_idx[pos] == kernel.size())
            inner_idx[pos++] = 0;
          if (pos == inner_idx.size()) break;
        }
      }
      std::size_t pos = 0;
      while (pos < mono_idx.size() && ++mono_idx[pos] == pool.size()) mono_idx[pos++] = 0;
      if (pos == mono_idx.size()) break;
    }
  }

  // random layer: longer monomials and more factors, same admissibility
  GaussianStream g(seed);
  const auto random_kernel_combo = [&]() {
    Coords c = Coords::Zero(d);
    for (const Coords& b : kernel) c += cdouble(g.normal(), g.normal()) * b;
    return c;
  };
  std::vector<detail::OracleMonomial> scratch;
  for (int rep = 0; rep < random_samples; ++rep) {
    const int s = 1 + static_cast<int>(g.uniform01() * std::min(6, max_order)) %
                          std::min(6, max_order);
    if (s >= 2 && kernel.empty()) continue;
    scratch.clear();
    scratch.reserve(static_cast<std::size_t>(s));
    int budget = max_order;
    bool ok = true;
    for (int j = 0; j < s; ++j) {
      const int remaining_factors = s - j - 1;
      const int len_cap = std::min(3, budget - remaining_factors);
      if (len_cap < 1) {
        ok = false;
        break;
      }
      const int len = 1 + static_cast<int>(g.uniform01() * len_cap) % len_cap;
      budget -= len;
      detail::OracleMonomial m;
      for (int t = 0; t < len; ++t) {
        m.vars.push_back(static_cast<int>(g.uniform01() * n) % n);
        if (t + 1 < len) {
          Coords dc = Coords::Zero(ctx.D.dim());
          for (int u = 0; u < ctx.D.dim(); ++u) dc(u) = cdouble(g.normal(), g.normal());
          m.mids.push_back(inc * dc);
        }
      }
      std::vector<Coords> cs = m.mids;
      cs.push_back(B.identity_coords());
      m.center = P * moments.eval(m.vars, cs);
      m.label = "rand" + std::to_string(static_cast<int>(m.vars.size()));
      scratch.push_back(std::move(m));
    }
    if (!ok) continue;
    factors.clear();
    afters.clear();
    std::string label = "random:";
    const Coords lead = g.uniform01() < 0.34 ? B.identity_coords() : random_kernel_combo();
    for (int j = 0; j < s; ++j) {
      factors.push_back(&scratch[static_cast<std::size_t>(j)]);
      label += " (" + factors.back()->label + "-c)";
      if (j + 1 < s) afters.push_back(random_kernel_combo());
    }
    afters.push_back(g.uniform01() < 0.34 ? B.identity_coords() : random_kernel_combo());
    try_word(lead, factors, afters, label);
  }

  report.verdict = classify(report.max_norm, pass_tol, detect_tol);
  return report;
}

// ---------------------------------------------------------------------------
// Restriction of cumulants to the base
// ---------------------------------------------------------------------------

struct RestrictionReport {
  bool hypothesis_ok = true;
  double hypothesis_defect = 0.0;
  bool pass = false;
  double max_deviation = 0.0;
  double tolerance = kStructuralTol;
};

/// When the stored cumulants take base values on base argument tuples, the
/// base-valued cumulants of the same variables (computed independently from
/// the F∘E moments) must be exactly those restrictions.
inline RestrictionReport check_restriction_theorem(const CumulantSeries& series_B,
                                                   const AlgebraContext& ctx, int order_max,
                                                   double tol = kStructuralTol) {
  if (order_max < 1 || order_max > series_B.order_cap())
    throw SizeLimitError("check_restriction_theorem: order beyond the stored cap");
  const MatrixAlgebra& B = series_B.algebra();
  const int n = series_B.n_vars();
  const int dd = ctx.D.dim();
  const Matrix rF = restriction_matrix(ctx.F, ctx.B);
  const Matrix inc = inclusion_matrix(ctx.D, ctx.B);

  RestrictionReport report;
  report.tolerance = tol;

  // hypothesis: base-argument cumulants stay in the base
  std::vector<Coords> args;
  for (int k = 1; k <= order_max; ++k) {
    detail::for_each_tuple(n, k, [&](std::span<const int> vars) {
      detail::for_each_tuple(dd, k - 1, [&](std::span<const int> picks) {
        args.clear();
        for (int t : picks) args.push_back(inc.col(t));
        const Coords v = series_B.eval_interior(vars, args);
        report.hypothesis_defect =
            std::max(report.hypothesis_defect, ctx.D.membership_defect(B.from_coords(v)));
      });
    });
  }
  report.hypothesis_ok = report.hypothesis_defect < tol;
  if (!report.hypothesis_ok) return report;

  // independent base side: moments, pushed down by F, then cumulants again
  const MomentSeries m_B = moments_from_cumulants(series_B);
  MomentSeries m_D(ctx.D, n, order_max);
  for (int k = 1; k <= order_max; ++k) {
    detail::for_each_tuple(n, k, [&](std::span<const int> vars) {
      detail::for_each_tuple(dd, k - 1, [&](std::span<const int> picks) {
        args.clear();
        for (int t : picks) args.push_back(inc.col(t));
        m_D.value(vars, picks) = rF * m_B.eval_interior(vars, args);
      });
    });
  }
  const CumulantSeries k_D = cumulants_from_moments(m_D);

  for (int k = 1; k <= order_max; ++k) {
    detail::for_each_tuple(n, k, [&](std::span<const int> vars) {
      detail::for_each_tuple(dd, k - 1, [&](std::span<const int> picks) {
        args.clear();
        for (int t : picks) args.push_back(inc.col(t));
        const Coords restricted = rF * series_B.eval_interior(vars, args);
        const Coords independent = k_D.value(vars, picks);
        report.max_deviation =
            std::max(report.max_deviation, (restricted - independent).cwiseAbs().maxCoeff());
      });
    });
  }
  report.pass = report.max_deviation < tol;
  return report;
}

/// Random series rarely satisfy the restriction hypothesis; this projection
/// makes any series satisfy it while keeping it random elsewhere:
/// k'(b...) = k(b...) - k(F(b)...) + F(k(F(b)...)).
inline CumulantSeries project_to_restriction_hypothesis(const CumulantSeries& series,
                                                        const AlgebraContext& ctx) {
  const MatrixAlgebra& B = series.algebra();
  const int d = B.dim();
  const Matrix rF = restriction_matrix(ctx.F, ctx.B);
  const Matrix inc = inclusion_matrix(ctx.D, ctx.B);
  const Matrix P = inc * rF;
  CumulantSeries out(B, series.n_vars(), series.order_cap());
  std::vector<Coords> args;
  for (int k = 1; k <= out.order_cap(); ++k) {
    detail::for_each_tuple(out.n_vars(), k, [&](std::span<const int> vars) {
      detail::for_each_tuple(d, k - 1, [&](std::span<const int> basis) {
        args.clear();
        for (int t : basis) args.push_back(P.col(t));
        const Coords projected_args_value = series.eval_interior(vars, args);
        out.value(vars, basis) = Coords(series.value(vars, basis)) - projected_args_value +
                                 P * projected_args_value;
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Semicircular characterization
// ---------------------------------------------------------------------------

struct SemicircularReport {
  bool eta1_scalar = false;
  double eta1_deviation = 0.0;     // distance from eta(1) to the base
  cdouble variance = 0.0;          // tau(eta(1))
  std::vector<cdouble> even_moments;  // tau(X^2), tau(X^4), ...
  double max_catalan_deviation = 0.0;
  bool moments_match = false;
  bool consistent = false;  // eta1_scalar and moments_match agree
  double m4_identity_deviation = 0.0;
  double cs_gap = 0.0;  // Re(m4 - 2 m2^2)
};

/// Scalar moments of a coefficient-valued semicircular element with
/// covariance map eta (a matrix on coefficient coordinates), computed as a
/// sum of nested covariance evaluations over pair partitions. The moment
/// sequence is the semicircle law exactly when eta(1) is scalar; the
/// order-4 moment also satisfies m4 = tau(eta(eta(1))) + tau(eta(1)^2).
inline SemicircularReport check_semicircular_characterization(const Matrix& eta,
                                                              const AlgebraContext& ctx,
                                                              int order_max,
                                                              double tol = kStructuralTol) {
  const MatrixAlgebra& B = ctx.B;
  const int d = B.dim();
  if (eta.rows() != d || eta.cols() != d)
    throw ConfigError("check_semicircular_characterization: eta must act on coefficient coords");
  if (ctx.D.dim() != 1)
    throw ConfigError("check_semicircular_characterization: base must be scalar");
  if (order_max < 4 || order_max > 2 * kMaxEnumerateN2)
    throw SizeLimitError("check_semicircular_characterization: order out of range");

  const Matrix rF = restriction_matrix(ctx.F, ctx.B);  // 1 x d
  const Matrix inc = inclusion_matrix(ctx.D, ctx.B);   // d x 1
  const auto tau = [&](const Coords& v) -> cdouble { return (rF * v)(0); };

  // the covariance as an order-2 series so bracketings can evaluate it
  CumulantSeries cov(B, 1, 2);
  for (int t = 0; t < d; ++t) cov.order_data(2).col(t) = eta.col(t);

  SemicircularReport report;
  const Coords one = B.identity_coords();
  const Coords eta1 = eta * one;
  report.eta1_deviation = (eta1 - inc * (rF * eta1)).cwiseAbs().maxCoeff();
  report.eta1_scalar = report.eta1_deviation < tol;
  report.variance = tau(eta1);

  const std::vector<long long> catalan = catalan_numbers(order_max / 2);
  cdouble m2 = 0.0, m4 = 0.0;
  for (int m = 1; 2 * m <= order_max; ++m) {
    const std::vector<int> vars(static_cast<std::size_t>(2 * m), 0);
    const std::vector<Coords> rights(static_cast<std::size_t>(2 * m), one);
    Coords total = Coords::Zero(d);
    for_each_nc2(2 * m, [&](const NonCrossingPartition& p) {
      total += evaluate_bracketing(cov, B, nesting_forest(p), vars, rights);
    });
    const cdouble moment = tau(total);
    report.even_moments.push_back(moment);
    if (m == 1) m2 = moment;
    if (m == 2) m4 = moment;
    const cdouble predicted =
        static_cast<double>(catalan[static_cast<std::size_t>(m)]) * std::pow(report.variance, m);
    report.max_catalan_deviation =
        std::max(report.max_catalan_deviation, std::abs(moment - predicted));
  }
  report.moments_match = report.max_catalan_deviation < tol;
  report.consistent = report.eta1_scalar == report.moments_match;

  const cdouble identity_rhs = tau(eta * eta1) + tau(B.mul_coords(eta1, eta1));
  report.m4_identity_deviation = std::abs(m4 - identity_rhs);
  report.cs_gap = (m4 - 2.0 * m2 * m2).real();
  return report;
}

// ---------------------------------------------------------------------------
// Transitivity along a tower of algebras
// ---------------------------------------------------------------------------

struct TransitivityReport {
  CheckReport compatibility;
  FactorizationReport large_over_mid;
  FactorizationReport mid_over_small;
  FactorizationReport large_over_small;
  bool chain_holds = false;  // both levels passing forces the composite
};

/// Restriction of a large-algebra series to a subalgebra the values land
/// in: arguments come from the subalgebra, values are expressed there.
inline CumulantSeries restrict_series(const CumulantSeries& series, const MatrixAlgebra& sub,
                                      const ConditionalExpectation& onto_sub) {
  const MatrixAlgebra& A = series.algebra();
  const Matrix inc = inclusion_matrix(sub, A);
  const Matrix r = restriction_matrix(onto_sub, A);
  CumulantSeries out(sub, series.n_vars(), series.order_cap());
  std::vector<Coords> args;
  for (int k = 1; k <= out.order_cap(); ++k) {
    detail::for_each_tuple(out.n_vars(), k, [&](std::span<const int> vars) {
      detail::for_each_tuple(sub.dim(), k - 1, [&](std::span<const int> picks) {
        args.clear();
        for (int t : picks) args.push_back(inc.col(t));
        out.value(vars, picks) = r * series.eval_interior(vars, args);
      });
    });
  }
  return out;
}

/// Freeness is transitive along a compatible tower: variables whose
/// cumulants factorize through the middle level, and whose middle-level
/// restrictions factorize through the bottom, must factorize through the
/// bottom outright. All three factorizations are checked and the
/// implication is reported.
inline TransitivityReport check_transitivity(const TowerContext& tower,
                                             const CumulantSeries& series_large, int order_max,
                                             double tol = kStructuralTol) {
  TransitivityReport report;

  // tower compatibility: expectations must compose, and stay faithful
  const ConditionalExpectation small_of_mid = compose(tower.to_small, tower.to_mid);
  const ConditionalExpectation mid_of_large = compose(tower.to_mid, tower.to_large);
  report.compatibility.record("bottom expectation factors through the middle",
                              entry_distance(small_of_mid.kernel(), tower.to_small.kernel()), tol);
  report.compatibility.record("middle expectation factors through the top",
                              entry_distance(mid_of_large.kernel(), tower.to_mid.kernel()), tol);
  report.compatibility.record(
      "bottom expectation faithful on the top algebra",
      check_faithfulness(tower.to_small, tower.large).faithful ? 0.0 : 1.0, 0.5);
  report.compatibility.record(
      "middle expectation faithful on the top algebra",
      check_faithfulness(tower.to_mid, tower.large).faithful ? 0.0 : 1.0, 0.5);
  if (!report.compatibility.ok) return report;

  report.large_over_mid = check_factorization(series_large, tower.to_mid, order_max, tol);
  const CumulantSeries mid_series = restrict_series(series_large, tower.mid, tower.to_mid);
  report.mid_over_small = check_factorization(mid_series, tower.to_small, order_max, tol);
  report.large_over_small = check_factorization(series_large, tower.to_small, order_max, tol);

  report.chain_holds = !(report.large_over_mid.pass && report.mid_over_small.pass) ||
                       report.large_over_small.pass;
  return report;
}

}  // namespace amalgam
