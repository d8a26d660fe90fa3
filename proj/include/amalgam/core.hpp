#pragma once

#include <complex>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace amalgam {

using cdouble = std::complex<double>;

// Absolute entrywise tolerance for all structural identities (membership,
// idempotence, round trips). Inputs are conditioned to unit scale.
inline constexpr double kStructuralTol = 1e-9;

// Freeness classification band: pass below kOraclePassTol, fail above
// kDetectionTol, inconclusive in between.
inline constexpr double kOraclePassTol = 1e-8;
inline constexpr double kDetectionTol = 1e-3;

/// Raised when a requested size exceeds a hard combinatorial cap.
class SizeLimitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on inconsistent construction data (sizes, weights, schemas).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation fails numerically (caps blown, degenerate data).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compact decimal rendering for diagnostics ("%.6g").
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

/// Catalan numbers C_0..C_k via the convolution recurrence.
inline std::vector<long long> catalan_numbers(int up_to) {
  std::vector<long long> c(static_cast<std::size_t>(up_to) + 1, 0);
  c[0] = 1;
  for (int k = 0; k < up_to; ++k) {
    long long acc = 0;
    for (int i = 0; i <= k; ++i) acc += c[i] * c[k - i];
    c[k + 1] = acc;
  }
  return c;
}

inline long long catalan(int k) { return catalan_numbers(k).back(); }

}  // namespace amalgam
