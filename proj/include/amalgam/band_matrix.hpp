#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "amalgam/algebra.hpp"
#include "amalgam/core.hpp"
#include "amalgam/nc_partitions.hpp"
#include "amalgam/rng.hpp"

namespace amalgam {

using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

/// Symmetric non-negative variance profile on the unit square, stored as
/// midpoint values on an m x m grid: cell (i, j) holds the value at
/// ((i+0.5)/m, (j+0.5)/m). A generator function, when available, lets the
/// grid be refined exactly; plain grids refine by cell subdivision.
class VarianceProfile {
 public:
  static VarianceProfile from_function(int m, std::function<double(double, double)> f) {
    if (m < 1) throw ConfigError("VarianceProfile: resolution must be positive");
    VarianceProfile p;
    p.fn_ = std::move(f);
    p.vals_ = tabulate(m, p.fn_);
    validate(p.vals_);
    return p;
  }

  static VarianceProfile from_grid(RealMatrix values) {
    validate(values);
    VarianceProfile p;
    p.vals_ = std::move(values);
    return p;
  }

  int resolution() const { return static_cast<int>(vals_.rows()); }
  const RealMatrix& grid() const { return vals_; }
  double at(int i, int j) const { return vals_(i, j); }

  /// Value at a point of the square: the covering cell's midpoint value.
  double value(double x, double y) const {
    const int m = resolution();
    const auto cell = [m](double t) {
      return std::clamp(static_cast<int>(t * m), 0, m - 1);
    };
    return vals_(cell(x), cell(y));
  }

  /// Twice the resolution: re-tabulated from the generator when one
  /// exists, otherwise each cell splits into four equal ones.
  VarianceProfile refined() const {
    const int m = resolution();
    VarianceProfile p;
    p.fn_ = fn_;
    if (fn_) {
      p.vals_ = tabulate(2 * m, fn_);
    } else {
      p.vals_.resize(2 * m, 2 * m);
      for (int i = 0; i < 2 * m; ++i)
        for (int j = 0; j < 2 * m; ++j) p.vals_(i, j) = vals_(i / 2, j / 2);
    }
    return p;
  }

 private:
  static RealMatrix tabulate(int m, const std::function<double(double, double)>& f) {
    RealMatrix v(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) v(i, j) = f((i + 0.5) / m, (j + 0.5) / m);
    return v;
  }

  static void validate(const RealMatrix& v) {
    if (v.rows() < 1 || v.rows() != v.cols())
      throw ConfigError("VarianceProfile: grid must be square and non-empty");
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < v.cols(); ++j) {
        if (v(i, j) < 0.0) throw ConfigError("VarianceProfile: negative variance value");
        if (std::abs(v(i, j) - v(j, i)) > 1e-9)
          throw ConfigError("VarianceProfile: profile must be symmetric");
      }
  }

  RealMatrix vals_;
  std::function<double(double, double)> fn_;
};

/// Named example profiles: "const" (1), "xy" (4xy), "affine" (1+x+y), and
/// "checkerboard" (2 and 1/2 on half-interval parity classes).
inline VarianceProfile builtin_profile(const std::string& name, int m = 64) {
  if (name == "const")
    return VarianceProfile::from_function(m, [](double, double) { return 1.0; });
  if (name == "xy")
    return VarianceProfile::from_function(m, [](double x, double y) { return 4.0 * x * y; });
  if (name == "affine")
    return VarianceProfile::from_function(m, [](double x, double y) { return 1.0 + x + y; });
  if (name == "checkerboard")
    return VarianceProfile::from_function(m, [](double x, double y) {
      const int px = x < 0.5 ? 0 : 1;
      const int py = y < 0.5 ? 0 : 1;
      return (px + py) % 2 == 0 ? 2.0 : 0.5;
    });
  throw ConfigError("builtin_profile: unknown name '" + name + "'");
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// One Hermitian band matrix: off-diagonal entries are complex Gaussian
/// with E|g_ij|^2 = sigma(x_i, x_j)/n (independent real and imaginary
/// halves), diagonal entries real Gaussian with variance sigma/n. Matrix
/// positions map to the square by midpoints x_i = (i+0.5)/n.
inline Matrix sample_band_matrix(int n, const VarianceProfile& profile, std::uint64_t seed) {
  if (n < 2) throw ConfigError("sample_band_matrix: need n >= 2");
  GaussianStream g(seed);
  Matrix h(n, n);
  for (int i = 0; i < n; ++i) {
    const double xi = (i + 0.5) / n;
    for (int j = i; j < n; ++j) {
      const double s = profile.value(xi, (j + 0.5) / n);
      if (i == j) {
        h(i, i) = std::sqrt(s / n) * g.normal();
      } else {
        const double half = std::sqrt(s / (2.0 * n));
        h(i, j) = cdouble(half * g.normal(), half * g.normal());
        h(j, i) = std::conj(h(i, j));
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Empirical spectra
// ---------------------------------------------------------------------------

struct SpectralSample {
  int n = 0;
  int trials = 0;
  std::vector<std::vector<double>> eigenvalues;  // per trial, ascending
  std::vector<double> moment_mean;               // (1/n) tr G^k averaged, k = 1..cap
  std::vector<double> moment_se;                 // standard error over trials
  double trace_vs_eigen_gap = 0.0;  // worst per-trial gap between the two moment routes

  std::vector<double> pooled() const {
    std::vector<double> all;
    for (const auto& ev : eigenvalues) all.insert(all.end(), ev.begin(), ev.end());
    std::sort(all.begin(), all.end());
    return all;
  }
};

/// Trial-averaged spectral data: normalized traces of powers for the
/// moments (three products cover orders up to eight), a symmetric
/// eigensolve per trial for the eigenvalue lists, and the worst
/// disagreement between the two moment routes.
inline SpectralSample empirical_spectrum(int n, const VarianceProfile& profile, int trials,
                                         std::uint64_t seed, int order_cap = 8) {
  if (trials < 1) throw ConfigError("empirical_spectrum: need at least one trial");
  if (order_cap < 1 || order_cap > 8)
    throw SizeLimitError("empirical_spectrum: trace powers cover orders 1..8");

  SpectralSample out;
  out.n = n;
  out.trials = trials;
  std::vector<std::vector<double>> per_trial(static_cast<std::size_t>(trials));

  for (int t = 0; t < trials; ++t) {
    const Matrix g = sample_band_matrix(n, profile, derive_stream_seed(seed, static_cast<std::uint64_t>(t)));
    const Matrix a = g * g;
    const Matrix b = a * g;
    const Matrix c = a * a;
    // Hermitian powers: tr(PQ) is the Frobenius inner product
    const auto frob = [](const Matrix& p, const Matrix& q) {
      return p.cwiseProduct(q.conjugate()).sum().real();
    };
    std::vector<double> tr(8);
    tr[0] = g.trace().real();
    tr[1] = a.trace().real();
    tr[2] = b.trace().real();
    tr[3] = c.trace().real();
    tr[4] = frob(a, b);
    tr[5] = frob(b, b);
    tr[6] = frob(b, c);
    tr[7] = frob(c, c);
    std::vector<double> moments(static_cast<std::size_t>(order_cap));
    for (int k = 0; k < order_cap; ++k) moments[static_cast<std::size_t>(k)] = tr[static_cast<std::size_t>(k)] / n;
    per_trial[static_cast<std::size_t>(t)] = moments;

    Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericError("empirical_spectrum: eigensolver failed");
    std::vector<double> ev(eig.eigenvalues().data(), eig.eigenvalues().data() + n);
    std::sort(ev.begin(), ev.end());

    // cross-check: power sums of the eigenvalues tell the same story
    for (int k = 1; k <= order_cap; ++k) {
      double s = 0.0;
      for (double l : ev) s += std::pow(l, k);
      out.trace_vs_eigen_gap =
          std::max(out.trace_vs_eigen_gap, std::abs(s / n - moments[static_cast<std::size_t>(k - 1)]));
    }
    out.eigenvalues.push_back(std::move(ev));
  }

  out.moment_mean.assign(static_cast<std::size_t>(order_cap), 0.0);
  out.moment_se.assign(static_cast<std::size_t>(order_cap), 0.0);
  for (int k = 0; k < order_cap; ++k) {
    double mean = 0.0;
    for (const auto& m : per_trial) mean += m[static_cast<std::size_t>(k)];
    mean /= trials;
    double var = 0.0;
    for (const auto& m : per_trial) {
      const double d = m[static_cast<std::size_t>(k)] - mean;
      var += d * d;
    }
    var = trials > 1 ? var / (trials - 1) : 0.0;
    out.moment_mean[static_cast<std::size_t>(k)] = mean;
    out.moment_se[static_cast<std::size_t>(k)] = std::sqrt(var / trials);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact moment predictor
// ---------------------------------------------------------------------------

struct MomentPrediction {
  std::vector<double> moments;  // orders 1..order_max, odd entries zero
  double refinement_delta = 0.0;
  bool resolution_warning = false;  // doubling the grid moved a moment by > 1e-3
};

namespace detail {

/// tau(X^k) for the operator-valued semicircular element whose covariance
/// is the discretized kernel: sum over pair partitions of nested kernel
/// applications, averaged over the grid. Functions on the grid multiply
/// pointwise; the kernel integrates against the profile row.
inline double predicted_moment(const RealMatrix& kernel, int k) {
  if (k % 2 == 1) return 0.0;
  const int m = static_cast<int>(kernel.rows());
  double total = 0.0;
  for_each_nc2(k, [&](const NonCrossingPartition& p) {
    const NestingForest forest = nesting_forest(p);
    const auto eval = [&](const auto& self, int id) -> RealVector {
      RealVector inner = RealVector::Ones(m);
      RealVector outer = RealVector::Ones(m);
      for (const auto& [after, child] : forest.nodes[static_cast<std::size_t>(id)].children)
        (after == 1 ? inner : outer).array() *= self(self, child).array();
      return (kernel * inner).cwiseProduct(outer);
    };
    RealVector prod = RealVector::Ones(m);
    for (int root : forest.roots) prod.array() *= eval(eval, root).array();
    total += prod.mean();
  });
  return total;
}

}  // namespace detail

/// Exact moments of the limiting spectral distribution for a given
/// profile: the profile acts as an integral kernel eta(f)(x) = integral of
/// sigma(x,y) f(y) dy (midpoint discretization), and tau(X^{2k}) sums the
/// nested kernel evaluations over non-crossing pair partitions. A
/// refinement pass flags grids too coarse for their profile.
inline MomentPrediction predict_moments(const VarianceProfile& profile, int order_max) {
  if (order_max < 1 || order_max > 12)
    throw SizeLimitError("predict_moments: supported orders are 1..12");
  const auto moments_at = [order_max](const VarianceProfile& p) {
    const RealMatrix kernel = p.grid() / p.resolution();
    std::vector<double> m(static_cast<std::size_t>(order_max));
    for (int k = 1; k <= order_max; ++k)
      m[static_cast<std::size_t>(k - 1)] = detail::predicted_moment(kernel, k);
    return m;
  };

  MomentPrediction out;
  out.moments = moments_at(profile);
  const std::vector<double> finer = moments_at(profile.refined());
  for (std::size_t i = 0; i < out.moments.size(); ++i)
    out.refinement_delta = std::max(out.refinement_delta, std::abs(out.moments[i] - finer[i]));
  out.resolution_warning = out.refinement_delta > 1e-3;
  return out;
}

// ---------------------------------------------------------------------------
// Constant-row-integral criterion
// ---------------------------------------------------------------------------

struct RowIntegralReport {
  bool constant = false;
  double min_integral = 0.0;
  double max_integral = 0.0;
  double range = 0.0;
  double tolerance = 0.0;
  std::vector<double> row_integrals;
};

/// The limit law is the semicircle exactly when the row integrals
/// r(x) = integral of sigma(x, y) dy do not depend on x.
inline RowIntegralReport corollary_criterion(const VarianceProfile& profile,
                                             double tol = kStructuralTol) {
  const int m = profile.resolution();
  RowIntegralReport report;
  report.tolerance = tol;
  report.row_integrals.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i)
    report.row_integrals[static_cast<std::size_t>(i)] = profile.grid().row(i).mean();
  const auto [lo, hi] =
      std::minmax_element(report.row_integrals.begin(), report.row_integrals.end());
  report.min_integral = *lo;
  report.max_integral = *hi;
  report.range = *hi - *lo;
  report.constant = report.range < tol;
  return report;
}

// ---------------------------------------------------------------------------
// Semicircle comparison
// ---------------------------------------------------------------------------

/// Distribution function of the semicircle law with variance c, in closed
/// form: F(x) = 1/2 + x sqrt(4c - x^2) / (4 pi c) + arcsin(x / (2 sqrt(c))) / pi.
inline double semicircle_cdf(double x, double c) {
  if (c <= 0.0) throw ConfigError("semicircle_cdf: variance must be positive");
  const double r = 2.0 * std::sqrt(c);
  if (x <= -r) return 0.0;
  if (x >= r) return 1.0;
  return 0.5 + x * std::sqrt(4.0 * c - x * x) / (4.0 * std::numbers::pi * c) +
         std::asin(x / r) / std::numbers::pi;
}

/// Kolmogorov-Smirnov distance between a sorted sample and the semicircle
/// law of variance c.
inline double ks_to_semicircle(const std::vector<double>& sorted_values, double c) {
  if (sorted_values.empty()) throw ConfigError("ks_to_semicircle: empty sample");
  const double n = static_cast<double>(sorted_values.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sorted_values.size(); ++i) {
    const double f = semicircle_cdf(sorted_values[i], c);
    worst = std::max(worst, std::abs(f - static_cast<double>(i) / n));
    worst = std::max(worst, std::abs(f - static_cast<double>(i + 1) / n));
  }
  return worst;
}

inline double semicircle_distance(const SpectralSample& sample, double c) {
  return ks_to_semicircle(sample.pooled(), c);
}

// ---------------------------------------------------------------------------
// Histograms (for reports and plotting)
// ---------------------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;      // bins + 1 ascending
  std::vector<long long> counts;  // per bin
};

inline Histogram make_histogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw ConfigError("make_histogram: need at least one bin");
  if (values.empty()) throw ConfigError("make_histogram: empty sample");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    h.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

}  // namespace amalgam
