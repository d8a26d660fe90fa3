#pragma once

#include <array>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "amalgam/algebra.hpp"
#include "amalgam/core.hpp"
#include "amalgam/nc_partitions.hpp"
#include "amalgam/rng.hpp"

namespace amalgam {

inline constexpr int kMaxSeriesOrder = 8;
inline constexpr long long kMaxTuplesPerOrder = 1LL << 22;

namespace detail {

inline long long ipow(long long base, int exp) {
  long long r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

/// Visit every tuple in [0, base)^len in lexicographic order.
template <class Fn>
void for_each_tuple(int base, int len, Fn&& fn) {
  std::vector<int> digits(static_cast<std::size_t>(len), 0);
  if (base <= 0 && len > 0) return;
  while (true) {
    fn(std::span<const int>(digits.data(), digits.size()));
    int p = len - 1;
    while (p >= 0 && ++digits[static_cast<std::size_t>(p)] == base)
      digits[static_cast<std::size_t>(p--)] = 0;
    if (p < 0) break;
  }
}

/// One multilinear argument for a tensor contraction: a basis element
/// (contracted by slicing, free) or a general coordinate vector.
struct ArgRef {
  int basis = -1;
  const Eigen::VectorXcd* vec = nullptr;
};

/// Contract a d x d^r column-major block (first argument index most
/// significant across columns) with r arguments into out (length d). The
/// scratch vectors must hold at least d^r entries each.
inline void contract_block(const cdouble* data, int d, int r, const ArgRef* args, Coords& out,
                           Eigen::VectorXcd& s1, Eigen::VectorXcd& s2) {
  const cdouble* cur = data;
  long long len = ipow(d, r + 1);  // scalars remaining
  Eigen::VectorXcd* write = &s1;
  Eigen::VectorXcd* other = &s2;
  for (int t = 0; t < r; ++t) {
    len /= d;
    if (args[t].basis >= 0) {
      cur += args[t].basis * len;
    } else {
      Eigen::Map<const Matrix> block(cur, len, d);
      write->head(len).noalias() = block * (*args[t].vec);
      cur = write->data();
      std::swap(write, other);
    }
  }
  out = Eigen::Map<const Eigen::VectorXcd>(cur, d);
}

}  // namespace detail

/// A family of B-valued multilinear maps indexed by variable words: for
/// every order k up to the cap and tuple (i_1..i_k), the values
/// f_{i_1..i_k}(b_1,...,b_{k-1}) are stored densely on tuples of basis
/// arguments; general arguments are reached by multilinearity. Evaluation
/// with k right coefficients appends the trailing one by right linearity,
/// f(b_1..b_k) = f(b_1..b_{k-1}) * b_k.
class OperatorSeries {
 public:
  OperatorSeries() = default;

  OperatorSeries(MatrixAlgebra algebra, int n_vars, int order_cap)
      : algebra_(std::move(algebra)), n_vars_(n_vars), order_cap_(order_cap) {
    if (n_vars_ <= 0) throw ConfigError("OperatorSeries: need at least one variable");
    if (order_cap_ < 1 || order_cap_ > kMaxSeriesOrder)
      throw SizeLimitError("OperatorSeries: order cap outside [1, " +
                           std::to_string(kMaxSeriesOrder) + "]");
    const int d = algebra_.dim();
    data_.resize(static_cast<std::size_t>(order_cap_));
    for (int k = 1; k <= order_cap_; ++k) {
      const long long tuples = detail::ipow(n_vars_, k) * detail::ipow(d, k - 1);
      if (tuples > kMaxTuplesPerOrder)
        throw SizeLimitError("OperatorSeries: dense storage exceeds the per-order cap");
      data_[static_cast<std::size_t>(k - 1)] = Matrix::Zero(d, tuples);
    }
  }

  int n_vars() const { return n_vars_; }
  int order_cap() const { return order_cap_; }
  const MatrixAlgebra& algebra() const { return algebra_; }

  long long tuple_count(int k) const { return order_data(k).cols(); }

  Matrix& order_data(int k) { return data_[check_order(k)]; }
  const Matrix& order_data(int k) const { return data_[check_order(k)]; }

  long long var_flat(std::span<const int> vars) const {
    long long f = 0;
    for (int i : vars) {
      if (i < 0 || i >= n_vars_) throw ConfigError("OperatorSeries: variable index out of range");
      f = f * n_vars_ + i;
    }
    return f;
  }

  long long column(std::span<const int> vars, std::span<const int> basis) const {
    if (basis.size() + 1 != vars.size())
      throw ConfigError("OperatorSeries: need one fewer basis index than variables");
    const int d = algebra_.dim();
    long long f = var_flat(vars);
    for (int t : basis) {
      if (t < 0 || t >= d) throw ConfigError("OperatorSeries: basis index out of range");
    }
    f *= detail::ipow(d, static_cast<int>(basis.size()));
    long long b = 0;
    for (int t : basis) b = b * d + t;
    return f + b;
  }

  Matrix::ColXpr value(std::span<const int> vars, std::span<const int> basis) {
    return order_data(static_cast<int>(vars.size())).col(column(vars, basis));
  }
  Matrix::ConstColXpr value(std::span<const int> vars, std::span<const int> basis) const {
    return order_data(static_cast<int>(vars.size())).col(column(vars, basis));
  }

  /// f_{i_1..i_k}(c_1,...,c_{k-1}) for arbitrary coefficient coordinates.
  Coords eval_interior(std::span<const int> vars, std::span<const Coords> coeffs) const {
    const int k = static_cast<int>(vars.size());
    if (static_cast<int>(coeffs.size()) != k - 1)
      throw ConfigError("OperatorSeries: need one fewer coefficient than variables");
    const int d = algebra_.dim();
    std::vector<detail::ArgRef> args(coeffs.size());
    for (std::size_t j = 0; j < coeffs.size(); ++j) args[j].vec = &coeffs[j];
    const long long col0 = var_flat(vars) * detail::ipow(d, k - 1);
    Eigen::VectorXcd s1(detail::ipow(d, k - 1)), s2(detail::ipow(d, k - 1));
    Coords out;
    detail::contract_block(order_data(k).data() + static_cast<long long>(d) * col0, d, k - 1,
                           args.data(), out, s1, s2);
    return out;
  }

  /// Full evaluation with one right coefficient per variable; the last one
  /// multiplies the interior value on the right.
  Coords eval(std::span<const int> vars, std::span<const Coords> right_coeffs) const {
    if (right_coeffs.size() != vars.size())
      throw ConfigError("OperatorSeries: need one right coefficient per variable");
    const Coords v = eval_interior(vars, right_coeffs.subspan(0, vars.size() - 1));
    return algebra_.mul_coords(v, right_coeffs[vars.size() - 1]);
  }

  void fill_random(GaussianStream& g, double scale = 1.0) {
    for (Matrix& m : data_)
      for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = scale * cdouble(g.normal(), g.normal());
  }

  double max_abs() const {
    double m = 0.0;
    for (const Matrix& block : data_)
      if (block.size() > 0) m = std::max(m, block.cwiseAbs().maxCoeff());
    return m;
  }

  bool same_shape(const OperatorSeries& other) const {
    return n_vars_ == other.n_vars_ && order_cap_ == other.order_cap_ &&
           algebra_.dim() == other.algebra_.dim();
  }

 private:
  std::size_t check_order(int k) const {
    if (k < 1 || k > order_cap_) throw SizeLimitError("OperatorSeries: order outside the cap");
    return static_cast<std::size_t>(k - 1);
  }

  MatrixAlgebra algebra_;
  int n_vars_ = 0;
  int order_cap_ = 0;
  std::vector<Matrix> data_;  // data_[k-1]: d x (n^k d^{k-1}), column = value
};

using MomentSeries = OperatorSeries;
using CumulantSeries = OperatorSeries;

inline double max_series_distance(const OperatorSeries& a, const OperatorSeries& b) {
  if (!a.same_shape(b)) throw ConfigError("max_series_distance: series shapes differ");
  double m = 0.0;
  for (int k = 1; k <= a.order_cap(); ++k)
    if (a.order_data(k).size() > 0)
      m = std::max(m, (a.order_data(k) - b.order_data(k)).cwiseAbs().maxCoeff());
  return m;
}

/// Evaluate the bracketing a non-crossing partition prescribes for a
/// multiplicative family f: top-level blocks multiply left to right, and a
/// nested block's value right-multiplies onto the right coefficient of the
/// parent element it follows. f must provide
/// eval(span<const int> vars, span<const Coords> right_coeffs).
template <class F>
Coords evaluate_bracketing(const F& f, const MatrixAlgebra& B, const NestingForest& forest,
                           std::span<const int> vars, std::span<const Coords> right_coeffs) {
  if (vars.size() != right_coeffs.size())
    throw ConfigError("evaluate_bracketing: need one right coefficient per variable");
  if (forest.nodes.empty()) return B.identity_coords();

  auto node_value = [&](auto&& self, int id) -> Coords {
    const NestingForest::Node& node = forest.nodes[static_cast<std::size_t>(id)];
    const std::size_t r = node.block.size();
    std::vector<int> idx(r);
    std::vector<Coords> c(r);
    for (std::size_t j = 0; j < r; ++j) {
      const int pos = node.block[j];  // 1-based word position
      idx[j] = vars[static_cast<std::size_t>(pos - 1)];
      c[j] = right_coeffs[static_cast<std::size_t>(pos - 1)];
    }
    for (const auto& [after, child] : node.children) {
      // a nested block always follows at least one parent element
      if (after < 1 || after >= static_cast<int>(r) + 1)
        throw NumericError("evaluate_bracketing: nested block without preceding parent element");
      c[static_cast<std::size_t>(after - 1)] =
          B.mul_coords(c[static_cast<std::size_t>(after - 1)], self(self, child));
    }
    return f.eval(idx, c);
  };

  Coords acc;
  bool first = true;
  for (int root : forest.roots) {
    Coords v = node_value(node_value, root);
    acc = first ? std::move(v) : B.mul_coords(acc, v);
    first = false;
  }
  return acc;
}

/// Concrete random variables: matrices in the ambient algebra of a context,
/// observed through its expectation onto the coefficient algebra.
struct VariableTuple {
  AlgebraContext context;
  std::vector<Matrix> representatives;
};

/// One factor of a moment word in normalized form: a variable index and the
/// coefficient standing to its right.
struct Argument {
  int var = 0;
  Matrix right_coeff;
};

/// E(left * X_{i_1} b_1 * ... * X_{i_k} b_k), an element of the coefficient
/// algebra, by direct matrix multiplication.
inline Matrix moment(const VariableTuple& vars, const Matrix& left_coeff,
                     std::span<const Argument> args) {
  if (args.empty()) throw ConfigError("moment: empty word");
  Matrix word = left_coeff;
  for (const Argument& a : args) {
    if (a.var < 0 || a.var >= static_cast<int>(vars.representatives.size()))
      throw ConfigError("moment: variable index out of range");
    word = word * vars.representatives[static_cast<std::size_t>(a.var)] * a.right_coeff;
  }
  return vars.context.E.apply(word);
}

/// Dense moment series of a variable tuple: the value at
/// (i_1..i_k; t_1..t_{k-1}) is E(X_{i_1} e_{t_1} ... e_{t_{k-1}} X_{i_k}).
/// Word prefixes are shared across the recursion.
inline MomentSeries moment_series(const VariableTuple& vars, int order_cap) {
  const MatrixAlgebra& B = vars.context.B;
  const int n = static_cast<int>(vars.representatives.size());
  const int d = B.dim();
  for (const Matrix& x : vars.representatives)
    if (x.rows() != vars.context.ambient_n || x.cols() != vars.context.ambient_n)
      throw ConfigError("moment_series: representative does not match the ambient dimension");
  MomentSeries out(B, n, order_cap);

  std::vector<int> idx(static_cast<std::size_t>(order_cap));
  std::vector<int> basis(static_cast<std::size_t>(order_cap));
  auto rec = [&](auto&& self, int depth, const Matrix& prefix) -> void {
    out.value(std::span<const int>(idx.data(), static_cast<std::size_t>(depth)),
              std::span<const int>(basis.data(), static_cast<std::size_t>(depth - 1))) =
        vars.context.E.apply_coords(prefix);
    if (depth == order_cap) return;
    for (int t = 0; t < d; ++t) {
      basis[static_cast<std::size_t>(depth - 1)] = t;
      const Matrix step = prefix * B.basis()[static_cast<std::size_t>(t)];
      for (int v = 0; v < n; ++v) {
        idx[static_cast<std::size_t>(depth)] = v;
        self(self, depth + 1, step * vars.representatives[static_cast<std::size_t>(v)]);
      }
    }
  };
  for (int v = 0; v < n; ++v) {
    idx[0] = v;
    rec(rec, 1, vars.representatives[static_cast<std::size_t>(v)]);
  }
  return out;
}

namespace detail {

/// Sorted 1-based positions of the block containing position 1, with a
/// sentinel k+1 slot after the last; one pattern per subset of {2..k}. The
/// full block is always the last entry.
struct FirstBlockPattern {
  int s = 0;
  std::array<int, kMaxSeriesOrder + 1> pos{};
};

inline std::vector<FirstBlockPattern> first_block_patterns(int k) {
  std::vector<FirstBlockPattern> out(std::size_t(1) << (k - 1));
  for (std::size_t mask = 0; mask < out.size(); ++mask) {
    FirstBlockPattern& p = out[mask];
    p.pos[static_cast<std::size_t>(p.s++)] = 1;
    for (int j = 2; j <= k; ++j)
      if (mask >> (j - 2) & 1u) p.pos[static_cast<std::size_t>(p.s++)] = j;
    p.pos[static_cast<std::size_t>(p.s)] = k + 1;
  }
  return out;
}

struct TransformWorkspace {
  explicit TransformWorkspace(int d, int order_cap) {
    const long long top = ipow(d, order_cap - 1);
    s1.resize(top);
    s2.resize(top);
    c.assign(static_cast<std::size_t>(order_cap), Coords(d));
    idx.resize(static_cast<std::size_t>(order_cap));
    basis.resize(static_cast<std::size_t>(order_cap));
    args.resize(static_cast<std::size_t>(order_cap));
    term.resize(d);
    acc.resize(d);
    tmp.resize(d);
  }
  Eigen::VectorXcd s1, s2;
  std::vector<Coords> c;
  std::vector<detail::ArgRef> args;
  std::vector<int> idx, basis;
  Coords term, acc, tmp;
};

/// Order-k layer of the moment/cumulant recursion grouped by the block
/// containing position 1. For each stored tuple,
///   moment = sum over patterns of k_s(c_1,...,c_{s-1}) * c_s,
/// where c_t chains the coefficient at the t-th block element with the full
/// moment of the gap following it; solving this for the full-block pattern
/// gives the cumulant direction (subtract every other pattern's term from
/// the moment). Moments of gaps come from lower orders of the moment
/// series, so layers must run in ascending order.
inline void first_block_layer(const OperatorSeries& source, OperatorSeries& target, int k,
                              bool to_moments, long long col_begin, long long col_end,
                              const std::vector<FirstBlockPattern>& patterns,
                              TransformWorkspace& ws) {
  const OperatorSeries& cumulants = to_moments ? source : target;
  const OperatorSeries& moments = to_moments ? target : source;
  const MatrixAlgebra& B = target.algebra();
  const int d = B.dim();
  const int n = target.n_vars();
  const std::size_t pattern_count = patterns.size() - (to_moments ? 0 : 1);

  for (long long col = col_begin; col < col_end; ++col) {
    // decode variable digits (base n) and basis digits (base d)
    long long rest = col;
    for (int j = k - 2; j >= 0; --j) {
      ws.basis[static_cast<std::size_t>(j)] = static_cast<int>(rest % d);
      rest /= d;
    }
    for (int j = k - 1; j >= 0; --j) {
      ws.idx[static_cast<std::size_t>(j)] = static_cast<int>(rest % n);
      rest /= n;
    }

    if (to_moments)
      ws.acc = Coords::Zero(d);
    else
      ws.acc = source.order_data(k).col(col);

    for (std::size_t pi = 0; pi < pattern_count; ++pi) {
      const FirstBlockPattern& p = patterns[pi];
      const int s = p.s;
      bool trailing_identity = false;
      // coefficient of each block slot; slots with a basis element stay as
      // slice references, general values land in ws.c
      for (int t = 0; t < s; ++t) {
        const int v = p.pos[static_cast<std::size_t>(t)];
        const int vnext = p.pos[static_cast<std::size_t>(t + 1)];
        const int gap_len = vnext - v - 1;
        if (gap_len == 0) {
          if (v == k) {
            trailing_identity = true;  // only possible at t = s-1
          } else {
            ws.args[static_cast<std::size_t>(t)] = {ws.basis[static_cast<std::size_t>(v - 1)],
                                                    nullptr};
          }
          continue;
        }
        // full moment of the gap at word positions v+1 .. vnext-1
        long long gvar = 0;
        for (int q = v; q <= vnext - 2; ++q) gvar = gvar * n + ws.idx[static_cast<std::size_t>(q)];
        long long gbasis = 0;
        for (int q = v; q <= vnext - 3; ++q)
          gbasis = gbasis * d + ws.basis[static_cast<std::size_t>(q)];
        const long long gcol = gvar * ipow(d, gap_len - 1) + gbasis;
        Coords& ct = ws.c[static_cast<std::size_t>(t)];
        if (vnext <= k) {
          // the gap's own trailing coefficient is the basis element at
          // word position vnext-1
          ws.tmp.noalias() = B.right_mul(ws.basis[static_cast<std::size_t>(vnext - 2)]) *
                             moments.order_data(gap_len).col(gcol);
          ct.noalias() = B.left_mul(ws.basis[static_cast<std::size_t>(v - 1)]) * ws.tmp;
        } else {
          ct.noalias() = B.left_mul(ws.basis[static_cast<std::size_t>(v - 1)]) *
                         moments.order_data(gap_len).col(gcol);
        }
        ws.args[static_cast<std::size_t>(t)] = {-1, &ct};
      }

      // contract the order-s cumulant block with the interior coefficients
      long long idxv = 0;
      for (int t = 0; t < s; ++t)
        idxv = idxv * n + ws.idx[static_cast<std::size_t>(p.pos[static_cast<std::size_t>(t)] - 1)];
      const cdouble* block = cumulants.order_data(s).data() +
                             static_cast<long long>(d) * (idxv * ipow(d, s - 1));
      contract_block(block, d, s - 1, ws.args.data(), ws.term, ws.s1, ws.s2);

      // trailing coefficient of the block
      if (!trailing_identity) {
        const detail::ArgRef& last = ws.args[static_cast<std::size_t>(s - 1)];
        if (last.basis >= 0) {
          ws.tmp.noalias() = B.right_mul(last.basis) * ws.term;
          ws.term.swap(ws.tmp);
        } else {
          ws.term = B.mul_coords(ws.term, *last.vec);
        }
      }

      if (to_moments)
        ws.acc += ws.term;
      else
        ws.acc -= ws.term;
    }
    target.order_data(k).col(col) = ws.acc;
  }
}

inline void run_first_block_recursion(const OperatorSeries& source, OperatorSeries& target,
                                      bool to_moments, int threads) {
  const int d = target.algebra().dim();
  for (int k = 1; k <= target.order_cap(); ++k) {
    const auto patterns = first_block_patterns(k);
    const long long tuples = target.tuple_count(k);
    const int workers = static_cast<int>(
        std::max<long long>(1, std::min<long long>(threads, (tuples + 255) / 256)));
    if (workers == 1) {
      TransformWorkspace ws(d, target.order_cap());
      first_block_layer(source, target, k, to_moments, 0, tuples, patterns, ws);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(workers));
      const long long chunk = (tuples + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) {
        const long long lo = w * chunk;
        const long long hi = std::min(tuples, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
          TransformWorkspace ws(d, target.order_cap());
          first_block_layer(source, target, k, to_moments, lo, hi, patterns, ws);
        });
      }
      for (std::thread& t : pool) t.join();
    }
  }
}

}  // namespace detail

/// Full non-crossing sum: the moment series whose cumulant series is the
/// input. Exact inverse of cumulants_from_moments.
inline MomentSeries moments_from_cumulants(const CumulantSeries& cumulants, int threads = 1) {
  MomentSeries moments(cumulants.algebra(), cumulants.n_vars(), cumulants.order_cap());
  detail::run_first_block_recursion(cumulants, moments, true, threads);
  return moments;
}

/// Solve the moment/cumulant relation top-down: at each order the cumulant
/// is the moment minus every bracketing by a partition with more than one
/// block, expressed through lower-order cumulants.
inline CumulantSeries cumulants_from_moments(const MomentSeries& moments, int threads = 1) {
  CumulantSeries cumulants(moments.algebra(), moments.n_vars(), moments.order_cap());
  detail::run_first_block_recursion(moments, cumulants, false, threads);
  return cumulants;
}

/// True when every stored map, fed arguments from the subalgebra, stays in
/// the subalgebra's span. Arguments range over sub's basis; the check is
/// multilinear, so this decides the property for all sub-valued arguments.
inline bool is_series_valued_in(const OperatorSeries& series, const MatrixAlgebra& sub,
                                double tol = kStructuralTol) {
  const MatrixAlgebra& B = series.algebra();
  std::vector<Coords> sub_in_b;
  for (const Matrix& e : sub.basis()) {
    if (!B.contains(e)) throw ConfigError("is_series_valued_in: subalgebra escapes the coefficients");
    sub_in_b.push_back(B.coords(e));
  }
  const int ds = sub.dim();
  std::vector<Coords> coeffs;
  bool inside = true;
  for (int k = 1; k <= series.order_cap() && inside; ++k) {
    detail::for_each_tuple(series.n_vars(), k, [&](std::span<const int> vars) {
      if (!inside) return;
      detail::for_each_tuple(ds, k - 1, [&](std::span<const int> picks) {
        if (!inside) return;
        coeffs.assign(picks.size(), Coords());
        for (std::size_t j = 0; j < picks.size(); ++j)
          coeffs[j] = sub_in_b[static_cast<std::size_t>(picks[j])];
        const Coords v = series.eval_interior(vars, coeffs);
        if (sub.membership_defect(B.from_coords(v)) > tol) inside = false;
      });
    });
  }
  return inside;
}

}  // namespace amalgam
