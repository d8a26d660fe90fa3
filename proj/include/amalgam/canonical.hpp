#pragma once

#include <span>
#include <utility>
#include <vector>

#include "amalgam/algebra.hpp"
#include "amalgam/core.hpp"
#include "amalgam/series.hpp"

namespace amalgam {

/// Upper bound on the fully distributed expansion of one canonical moment.
inline constexpr long long kMaxCanonicalWords = 1'000'000;

/// One generator of the formal model: a creation-like star symbol, or an
/// absorbing ladder symbol of positive level. Level-0 ladders are never
/// stored; they stand for a plain coefficient-algebra element and are
/// folded into the neighboring coefficient at construction time.
struct GeneratorSymbol {
  enum class Kind { kStar, kLadder };
  Kind kind = Kind::kStar;
  int var = 0;    // variable index, 0-based
  int level = 0;  // ladders only, >= 1

  bool operator==(const GeneratorSymbol&) const = default;
};

inline GeneratorSymbol star(int var) { return {GeneratorSymbol::Kind::kStar, var, 0}; }
inline GeneratorSymbol ladder(int var, int level) {
  return {GeneratorSymbol::Kind::kLadder, var, level};
}

/// An alternating word b_0 g_1 b_1 ... g_r b_r with coefficients stored as
/// coordinates in the coefficient algebra. r = 0 is a plain algebra
/// element.
struct FormalWord {
  std::vector<Coords> coeffs;  // size gens.size() + 1
  std::vector<GeneratorSymbol> gens;
};

/// A finite linear combination of formal words. Scalar weights live inside
/// the leading coefficients. Products distribute eagerly; call normalize to
/// merge structurally equal words and drop zero terms.
struct FormalElement {
  std::vector<FormalWord> words;
};

/// A cumulant series together with the ladder truncation level L; the
/// series must reach order L+1 so every stored ladder can absorb.
struct PrescribedCumulants {
  CumulantSeries series;
  int truncation = 0;

  PrescribedCumulants() = default;
  explicit PrescribedCumulants(CumulantSeries s, int level_cap = -1) : series(std::move(s)) {
    truncation = level_cap < 0 ? series.order_cap() - 1 : level_cap;
    if (truncation < 0 || truncation + 1 > series.order_cap())
      throw ConfigError("PrescribedCumulants: truncation needs cumulants up to order L+1");
  }
};

inline FormalElement algebra_element(Coords b) {
  FormalWord w;
  w.coeffs.push_back(std::move(b));
  return FormalElement{{std::move(w)}};
}

inline FormalElement generator_element(const GeneratorSymbol& g, const MatrixAlgebra& B) {
  FormalWord w;
  w.coeffs.push_back(B.identity_coords());
  w.gens.push_back(g);
  w.coeffs.push_back(B.identity_coords());
  return FormalElement{{std::move(w)}};
}

inline FormalElement add(FormalElement a, const FormalElement& b) {
  a.words.insert(a.words.end(), b.words.begin(), b.words.end());
  return a;
}

/// Product of two elements: words concatenate, and the touching boundary
/// coefficients multiply in the algebra. No merging is performed.
inline FormalElement mul(const FormalElement& a, const FormalElement& b, const MatrixAlgebra& B) {
  FormalElement out;
  out.words.reserve(a.words.size() * b.words.size());
  for (const FormalWord& wa : a.words)
    for (const FormalWord& wb : b.words) {
      FormalWord w;
      w.gens.reserve(wa.gens.size() + wb.gens.size());
      w.coeffs.reserve(wa.coeffs.size() + wb.coeffs.size() - 1);
      w.gens = wa.gens;
      w.gens.insert(w.gens.end(), wb.gens.begin(), wb.gens.end());
      w.coeffs.assign(wa.coeffs.begin(), wa.coeffs.end() - 1);
      w.coeffs.push_back(B.mul_coords(wa.coeffs.back(), wb.coeffs.front()));
      w.coeffs.insert(w.coeffs.end(), wb.coeffs.begin() + 1, wb.coeffs.end());
      out.words.push_back(std::move(w));
    }
  return out;
}

inline FormalElement scale_left(const Coords& b, FormalElement x, const MatrixAlgebra& B) {
  for (FormalWord& w : x.words) w.coeffs.front() = B.mul_coords(b, w.coeffs.front());
  return x;
}

inline FormalElement scale_right(FormalElement x, const Coords& b, const MatrixAlgebra& B) {
  for (FormalWord& w : x.words) w.coeffs.back() = B.mul_coords(w.coeffs.back(), b);
  return x;
}

/// Merge structurally equal words (same generators, same interior
/// coefficients within tol) by adding their leading coefficients; drop
/// words any of whose coefficients vanish.
inline void normalize(FormalElement& x, double tol = kStructuralTol) {
  std::vector<FormalWord> merged;
  for (FormalWord& w : x.words) {
    bool zero = false;
    for (const Coords& c : w.coeffs)
      if (c.cwiseAbs().maxCoeff() <= tol) zero = true;
    if (zero) continue;
    bool joined = false;
    for (FormalWord& m : merged) {
      if (m.gens != w.gens) continue;
      bool same = true;
      for (std::size_t i = 1; i < m.coeffs.size() && same; ++i)
        if ((m.coeffs[i] - w.coeffs[i]).cwiseAbs().maxCoeff() > tol) same = false;
      if (!same) continue;
      m.coeffs.front() += w.coeffs.front();
      joined = true;
      break;
    }
    if (!joined) merged.push_back(std::move(w));
  }
  // leading coefficients may have cancelled during merging
  std::vector<FormalWord> kept;
  for (FormalWord& w : merged)
    if (w.coeffs.front().cwiseAbs().maxCoeff() > tol) kept.push_back(std::move(w));
  x.words = std::move(kept);
}

namespace detail {

inline void check_word(const FormalWord& w, const PrescribedCumulants& pc) {
  if (w.coeffs.size() != w.gens.size() + 1)
    throw ConfigError("FormalWord: need one more coefficient than generators");
  for (const GeneratorSymbol& g : w.gens) {
    if (g.var < 0 || g.var >= pc.series.n_vars())
      throw ConfigError("FormalWord: generator variable out of range");
    if (g.kind == GeneratorSymbol::Kind::kLadder && (g.level < 1 || g.level > pc.truncation))
      throw SizeLimitError("FormalWord: ladder level outside [1, truncation]");
  }
}

/// The absorbed value of a star run (j_1, b_1) ... (j_q, b_q) followed by a
/// level-q ladder with variable j: the prescribed cumulant at the combined
/// index tuple, evaluated on the interior coefficients.
inline Coords absorb(const PrescribedCumulants& pc, std::span<const int> star_vars,
                     std::span<const Coords> star_coeffs, int ladder_var) {
  std::vector<int> idx(star_vars.begin(), star_vars.end());
  idx.push_back(ladder_var);
  return pc.series.eval_interior(idx, star_coeffs);
}

}  // namespace detail

/// Positions (indices into gens) of every ladder that currently has enough
/// stars directly in front of it to absorb.
inline std::vector<int> find_redexes(const FormalWord& w) {
  std::vector<int> out;
  int run = 0;  // consecutive stars ending just before position i
  for (std::size_t i = 0; i < w.gens.size(); ++i) {
    const GeneratorSymbol& g = w.gens[i];
    if (g.kind == GeneratorSymbol::Kind::kStar) {
      ++run;
      continue;
    }
    if (g.level >= 1 && g.level <= run) out.push_back(static_cast<int>(i));
    run = 0;
  }
  return out;
}

/// Rewrite the ladder at gens[pos]: the ladder and its stars disappear, and
/// the absorbed value chains into the surrounding coefficients.
inline void apply_redex(FormalWord& w, int pos, const PrescribedCumulants& pc) {
  const MatrixAlgebra& B = pc.series.algebra();
  if (pos < 0 || pos >= static_cast<int>(w.gens.size()) ||
      w.gens[static_cast<std::size_t>(pos)].kind != GeneratorSymbol::Kind::kLadder)
    throw ConfigError("apply_redex: position is not a ladder");
  const int q = w.gens[static_cast<std::size_t>(pos)].level;
  const int lo = pos - q;  // first star of the run
  if (lo < 0) throw ConfigError("apply_redex: not enough preceding generators");
  std::vector<int> star_vars;
  for (int t = lo; t < pos; ++t) {
    const GeneratorSymbol& g = w.gens[static_cast<std::size_t>(t)];
    if (g.kind != GeneratorSymbol::Kind::kStar)
      throw ConfigError("apply_redex: ladder is not preceded by a star run");
    star_vars.push_back(g.var);
  }
  const Coords v = detail::absorb(
      pc, star_vars, std::span<const Coords>(w.coeffs.data() + lo + 1, static_cast<std::size_t>(q)),
      w.gens[static_cast<std::size_t>(pos)].var);
  const Coords merged =
      B.mul_coords(B.mul_coords(w.coeffs[static_cast<std::size_t>(lo)], v),
                   w.coeffs[static_cast<std::size_t>(pos) + 1]);
  w.gens.erase(w.gens.begin() + lo, w.gens.begin() + pos + 1);
  w.coeffs.erase(w.coeffs.begin() + lo + 1, w.coeffs.begin() + pos + 2);
  w.coeffs[static_cast<std::size_t>(lo)] = merged;
}

/// Normal form of a word under the absorption rule, rewriting the leftmost
/// reducible ladder until none remains. Reduction of a single word never
/// branches; order-independence is covered by the randomized tests.
inline FormalWord reduce(FormalWord w, const PrescribedCumulants& pc) {
  detail::check_word(w, pc);
  for (;;) {
    const std::vector<int> redexes = find_redexes(w);
    if (redexes.empty()) return w;
    apply_redex(w, redexes.front(), pc);
  }
}

/// The expectation onto the coefficient algebra: a word contributes its
/// value when it reduces to a plain algebra element and zero otherwise
/// (irreducible words are orthogonal to the algebra).
inline Coords expectation(const FormalElement& x, const PrescribedCumulants& pc) {
  const MatrixAlgebra& B = pc.series.algebra();
  Coords acc = Coords::Zero(B.dim());
  for (const FormalWord& w : x.words) {
    const FormalWord nf = reduce(w, pc);
    if (nf.gens.empty()) acc += nf.coeffs.front();
  }
  return acc;
}

/// The truncated canonical variable Y_j: the star symbol, the order-1
/// cumulant as a plain element (the level-0 ladder), and one ladder per
/// level up to the truncation.
inline FormalElement variable_y(int j, const PrescribedCumulants& pc) {
  const MatrixAlgebra& B = pc.series.algebra();
  if (j < 0 || j >= pc.series.n_vars()) throw ConfigError("variable_y: index out of range");
  FormalElement y = generator_element(star(j), B);
  y = add(std::move(y), algebra_element(pc.series.order_data(1).col(j)));
  for (int q = 1; q <= pc.truncation; ++q)
    y = add(std::move(y), generator_element(ladder(j, q), B));
  return y;
}

/// The moment map of the canonical family, evaluated without materializing
/// words: a depth-first walk over the generator choice per factor keeps a
/// stack of open stars and the running coefficient, absorbing ladders as
/// they appear. Branches whose stack can no longer empty are cut; such
/// words are irreducible and contribute nothing. Call interface matches the
/// dense series, so bracketings and transforms accept it directly.
class CanonicalMomentMap {
 public:
  explicit CanonicalMomentMap(const PrescribedCumulants& pc) : pc_(&pc) {}

  Coords eval(std::span<const int> vars, std::span<const Coords> right_coeffs) const {
    const MatrixAlgebra& B = pc_->series.algebra();
    const int k = static_cast<int>(vars.size());
    if (right_coeffs.size() != vars.size())
      throw ConfigError("CanonicalMomentMap: need one right coefficient per variable");
    if (k == 0) return B.identity_coords();
    for (int v : vars)
      if (v < 0 || v >= pc_->series.n_vars())
        throw ConfigError("CanonicalMomentMap: variable index out of range");
    const int L = pc_->truncation;
    long long expansion = 1;
    for (int t = 0; t < k; ++t) {
      expansion *= L + 2;
      if (expansion > kMaxCanonicalWords)
        throw SizeLimitError("CanonicalMomentMap: expansion exceeds the word cap");
    }

    State st;
    st.cur = B.identity_coords();
    Coords acc = Coords::Zero(B.dim());
    walk(vars, right_coeffs, 0, st, acc);
    return acc;
  }

 private:
  struct State {
    std::vector<int> svar;
    std::vector<Coords> scoeff;
    Coords cur;
  };

  // chain value * coeff onto whatever stands left of the current position
  static void merge_left(const MatrixAlgebra& B, State& st, const Coords& value) {
    if (st.scoeff.empty())
      st.cur = B.mul_coords(st.cur, value);
    else
      st.scoeff.back() = B.mul_coords(st.scoeff.back(), value);
  }

  void walk(std::span<const int> vars, std::span<const Coords> right, int t, State& st,
            Coords& acc) const {
    const MatrixAlgebra& B = pc_->series.algebra();
    const int k = static_cast<int>(vars.size());
    const int L = pc_->truncation;
    const int depth = static_cast<int>(st.svar.size());
    if (t == k) {
      if (depth == 0) acc += st.cur;
      return;
    }
    // remaining factors can lower the stack by at most L each
    if (static_cast<long long>(depth) > static_cast<long long>(k - t) * L) return;
    const int j = vars[static_cast<std::size_t>(t)];
    const Coords& c = right[static_cast<std::size_t>(t)];

    // star: push an open frame carrying the following coefficient
    st.svar.push_back(j);
    st.scoeff.push_back(c);
    walk(vars, right, t + 1, st, acc);
    st.svar.pop_back();
    st.scoeff.pop_back();

    // level-0 ladder: the order-1 cumulant chains into the left
    {
      const Coords w = B.mul_coords(pc_->series.order_data(1).col(j), c);
      State saved_top = save_top(st);
      merge_left(B, st, w);
      walk(vars, right, t + 1, st, acc);
      restore_top(st, saved_top);
    }

    // ladders: absorb the top q frames into a cumulant value
    for (int q = 1; q <= L && q <= depth; ++q) {
      std::vector<int> idx(st.svar.end() - q, st.svar.end());
      idx.push_back(j);
      const Coords v = pc_->series.eval_interior(
          idx, std::span<const Coords>(st.scoeff.data() + depth - q, static_cast<std::size_t>(q)));
      const Coords w = B.mul_coords(v, c);
      std::vector<int> popped_vars(st.svar.end() - q, st.svar.end());
      std::vector<Coords> popped_coeffs(st.scoeff.end() - q, st.scoeff.end());
      st.svar.resize(st.svar.size() - static_cast<std::size_t>(q));
      st.scoeff.resize(st.scoeff.size() - static_cast<std::size_t>(q));
      State saved_top = save_top(st);
      merge_left(B, st, w);
      walk(vars, right, t + 1, st, acc);
      restore_top(st, saved_top);
      st.svar.insert(st.svar.end(), popped_vars.begin(), popped_vars.end());
      st.scoeff.insert(st.scoeff.end(), popped_coeffs.begin(), popped_coeffs.end());
    }
  }

  // merge_left touches either cur or the top frame; snapshot both cheaply
  static State save_top(const State& st) {
    State s;
    s.cur = st.cur;
    if (!st.scoeff.empty()) s.scoeff.push_back(st.scoeff.back());
    return s;
  }
  static void restore_top(State& st, const State& saved) {
    st.cur = saved.cur;
    if (!saved.scoeff.empty()) st.scoeff.back() = saved.scoeff.front();
  }

  const PrescribedCumulants* pc_;
};

/// E_B(left * Y_{i_1} b_1 ... Y_{i_k} b_k): the expectation is bilinear, so
/// the left coefficient factors out of the walk.
inline Coords canonical_moment(const PrescribedCumulants& pc, const Coords& left,
                               std::span<const int> vars, std::span<const Coords> right_coeffs) {
  CanonicalMomentMap map(pc);
  return pc.series.algebra().mul_coords(left, map.eval(vars, right_coeffs));
}

/// Dense moment series of the canonical family. Exact reproduction of the
/// prescribed cumulants requires truncation >= order_cap - 1.
inline MomentSeries canonical_moment_series(const PrescribedCumulants& pc, int order_cap) {
  const MatrixAlgebra& B = pc.series.algebra();
  const int d = B.dim();
  MomentSeries out(B, pc.series.n_vars(), order_cap);
  CanonicalMomentMap map(pc);
  std::vector<Coords> coeffs;
  for (int k = 1; k <= order_cap; ++k) {
    detail::for_each_tuple(pc.series.n_vars(), k, [&](std::span<const int> vars) {
      detail::for_each_tuple(d, k - 1, [&](std::span<const int> basis) {
        coeffs.clear();
        for (int t : basis) coeffs.push_back(Coords::Unit(d, t));
        coeffs.push_back(B.identity_coords());
        out.value(vars, basis) = map.eval(vars, coeffs);
      });
    });
  }
  return out;
}

}  // namespace amalgam
