#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "amalgam/algebra.hpp"
#include "amalgam/band_matrix.hpp"
#include "amalgam/canonical.hpp"
#include "amalgam/freeness.hpp"
#include "amalgam/series.hpp"

namespace amalgam::io {

// ordered_json keeps insertion order, so equal data serializes to equal
// bytes — required for reproducible command output
using json = nlohmann::ordered_json;

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

inline void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Scalars and matrices: complex numbers as [re, im], matrices row-major
// ---------------------------------------------------------------------------

inline json complex_to_json(cdouble z) { return json::array({z.real(), z.imag()}); }

inline cdouble complex_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError("expected a complex number as [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(complex_to_json(m(r, c)));
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = data;
  return j;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw ConfigError("matrix object needs rows, cols, data");
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() ||
      static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("matrix data length does not match rows x cols");
  Matrix m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = complex_from_json(data[static_cast<std::size_t>(k++)]);
  return m;
}

// ---------------------------------------------------------------------------
// Contexts: rebuilt from their constructor parameters
// ---------------------------------------------------------------------------

/// Enough data to rebuild a coefficient/base pair: either diagonal blocks
/// over the scalars, or grouped diagonals.
struct ContextSpec {
  std::string type;  // "block_diagonal" | "grouped_diagonal"
  std::vector<int> blocks;               // block_diagonal
  int n = 0;                             // grouped_diagonal ambient size
  std::vector<std::vector<int>> groups;  // grouped_diagonal
  std::vector<double> weights;           // optional, both types
};

inline json context_spec_to_json(const ContextSpec& spec) {
  json j;
  j["kind"] = "context";
  j["type"] = spec.type;
  if (spec.type == "block_diagonal") {
    j["blocks"] = spec.blocks;
  } else {
    j["n"] = spec.n;
    j["groups"] = spec.groups;
  }
  if (!spec.weights.empty()) j["weights"] = spec.weights;
  return j;
}

inline ContextSpec context_spec_from_json(const json& j) {
  ContextSpec spec;
  if (!j.contains("type")) throw ConfigError("context needs a type");
  spec.type = j.at("type").get<std::string>();
  if (spec.type == "block_diagonal") {
    if (!j.contains("blocks")) throw ConfigError("block_diagonal context needs blocks");
    spec.blocks = j.at("blocks").get<std::vector<int>>();
  } else if (spec.type == "grouped_diagonal") {
    if (!j.contains("n") || !j.contains("groups"))
      throw ConfigError("grouped_diagonal context needs n and groups");
    spec.n = j.at("n").get<int>();
    spec.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  } else {
    throw ConfigError("unknown context type '" + spec.type + "'");
  }
  if (j.contains("weights")) spec.weights = j.at("weights").get<std::vector<double>>();
  return spec;
}

inline AlgebraContext build_context(const ContextSpec& spec) {
  if (spec.type == "block_diagonal") return make_block_diagonal_context(spec.blocks, spec.weights);
  return make_grouped_diagonal_context(spec.n, spec.groups, spec.weights);
}

// ---------------------------------------------------------------------------
// Series files: self-describing, so single-file commands work
// ---------------------------------------------------------------------------

struct SeriesFile {
  ContextSpec spec;
  AlgebraContext context;
  std::string role;     // "moments" | "cumulants"
  std::string algebra;  // "B" | "D"
  std::optional<OperatorSeries> series;
};

/// Entries are keyed by variable tuple and basis-argument tuple; values are
/// the ambient complex matrices of the stored elements. Exact-zero values
/// are omitted and read back as zero.
inline json series_to_json(const OperatorSeries& s, const ContextSpec& spec,
                           const std::string& role, const std::string& algebra = "B") {
  const MatrixAlgebra& a = s.algebra();
  const int d = a.dim();
  json entries = json::array();
  for (int k = 1; k <= s.order_cap(); ++k)
    detail::for_each_tuple(s.n_vars(), k, [&](std::span<const int> vars) {
      detail::for_each_tuple(d, k - 1, [&](std::span<const int> basis) {
        const Coords col = s.value(vars, basis);
        if (col.cwiseAbs().maxCoeff() == 0.0) return;
        json e;
        e["vars"] = std::vector<int>(vars.begin(), vars.end());
        e["args"] = std::vector<int>(basis.begin(), basis.end());
        e["value"] = matrix_to_json(a.from_coords(col));
        entries.push_back(std::move(e));
      });
    });
  json j;
  j["kind"] = "series";
  j["role"] = role;
  j["context"] = context_spec_to_json(spec);
  j["algebra"] = algebra;
  j["n_vars"] = s.n_vars();
  j["order_cap"] = s.order_cap();
  j["entries"] = std::move(entries);
  return j;
}

inline SeriesFile series_from_json(const json& j) {
  if (!j.contains("kind") || j.at("kind") != "series")
    throw ConfigError("expected a series file (kind = series)");
  SeriesFile f;
  f.spec = context_spec_from_json(j.at("context"));
  f.context = build_context(f.spec);
  f.role = j.value("role", "cumulants");
  if (f.role != "moments" && f.role != "cumulants")
    throw ConfigError("series role must be moments or cumulants");
  f.algebra = j.value("algebra", "B");
  if (f.algebra != "B" && f.algebra != "D")
    throw ConfigError("series algebra must be B or D");
  const MatrixAlgebra& a = f.algebra == "B" ? f.context.B : f.context.D;
  const int n_vars = j.at("n_vars").get<int>();
  const int cap = j.at("order_cap").get<int>();
  OperatorSeries s(a, n_vars, cap);
  const Eigen::Index ambient = a.basis().front().rows();
  if (!j.contains("entries") || !j.at("entries").is_array())
    throw ConfigError("series needs an entries array");
  for (const json& e : j.at("entries")) {
    const auto vars = e.at("vars").get<std::vector<int>>();
    const auto args = e.at("args").get<std::vector<int>>();
    const int k = static_cast<int>(vars.size());
    if (k < 1 || k > cap) throw ConfigError("series entry order outside the cap");
    const Matrix v = matrix_from_json(e.at("value"));
    if (v.rows() != ambient || v.cols() != ambient)
      throw ConfigError("series entry value has the wrong ambient size");
    if (a.membership_defect(v) > 1e-9)
      throw ConfigError("series entry value does not lie in the stated algebra");
    s.value(vars, args) = a.coords(v);  // tuple ranges checked by the series
  }
  f.series.emplace(std::move(s));
  return f;
}

// ---------------------------------------------------------------------------
// Covariance maps and variance profiles
// ---------------------------------------------------------------------------

inline json eta_to_json(const Matrix& eta) {
  json j = matrix_to_json(eta);
  j["kind"] = "eta";
  return j;
}

inline Matrix eta_from_json(const json& j) {
  const Matrix m = matrix_from_json(j);
  if (m.rows() != m.cols()) throw ConfigError("a covariance map must be square");
  return m;
}

inline json profile_to_json(const VarianceProfile& p) {
  json j;
  j["kind"] = "profile";
  j["resolution"] = p.resolution();
  json data = json::array();
  for (int i = 0; i < p.resolution(); ++i)
    for (int k = 0; k < p.resolution(); ++k) data.push_back(p.at(i, k));
  j["values"] = std::move(data);
  return j;
}

inline VarianceProfile profile_from_json(const json& j) {
  const int m = j.at("resolution").get<int>();
  const json& data = j.at("values");
  if (m < 1 || !data.is_array() || static_cast<int>(data.size()) != m * m)
    throw ConfigError("profile values length does not match resolution^2");
  RealMatrix v(m, m);
  int k = 0;
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < m; ++c) v(i, c) = data[static_cast<std::size_t>(k++)].get<double>();
  return VarianceProfile::from_grid(std::move(v));
}

/// "builtin:<name>" or a path to a profile JSON file.
inline VarianceProfile profile_from_spec(const std::string& spec, int resolution = 64) {
  if (spec.rfind("builtin:", 0) == 0) return builtin_profile(spec.substr(8), resolution);
  return profile_from_json(load_json_file(spec));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json to_json(const CheckReport& r) {
  json j;
  j["ok"] = r.ok;
  j["max_violation"] = r.max_violation;
  j["failures"] = r.failures;
  return j;
}

inline json to_json(const FaithfulnessReport& r) {
  json j;
  j["faithful"] = r.faithful;
  j["min_eigenvalue"] = r.min_eigenvalue;
  json witness = json::array();
  for (Eigen::Index i = 0; i < r.witness.size(); ++i) witness.push_back(complex_to_json(r.witness(i)));
  j["witness"] = std::move(witness);
  return j;
}

inline json to_json(const ContextReport& r) {
  json j;
  j["ok"] = r.ok();
  j["inclusions"] = to_json(r.inclusions);
  j["coefficient_expectation"] = to_json(r.coefficient_expectation);
  j["base_expectation"] = to_json(r.base_expectation);
  j["base_faithful"] = to_json(r.base_faithful);
  return j;
}

inline json to_json(const FactorizationReport& r) {
  json j;
  j["pass"] = r.pass;
  j["max_deviation"] = r.max_deviation;
  j["tolerance"] = r.tolerance;
  j["per_order"] = r.per_order;
  j["worst_order"] = r.worst_order;
  j["worst_vars"] = r.worst_vars;
  j["worst_args"] = r.worst_args;
  return j;
}

inline json to_json(const FreenessReport& r) {
  json j;
  j["verdict"] = to_string(r.verdict);
  j["max_norm"] = r.max_norm;
  j["pass_tol"] = r.pass_tol;
  j["detect_tol"] = r.detect_tol;
  j["words_tested"] = r.words_tested;
  j["worst_word"] = r.worst_word;
  return j;
}

inline json to_json(const RestrictionReport& r) {
  json j;
  j["hypothesis_ok"] = r.hypothesis_ok;
  j["hypothesis_defect"] = r.hypothesis_defect;
  j["pass"] = r.pass;
  j["max_deviation"] = r.max_deviation;
  j["tolerance"] = r.tolerance;
  return j;
}

inline json to_json(const SemicircularReport& r) {
  json j;
  j["eta1_scalar"] = r.eta1_scalar;
  j["eta1_deviation"] = r.eta1_deviation;
  j["variance"] = complex_to_json(r.variance);
  json moments = json::array();
  for (cdouble m : r.even_moments) moments.push_back(complex_to_json(m));
  j["even_moments"] = std::move(moments);
  j["max_catalan_deviation"] = r.max_catalan_deviation;
  j["moments_match"] = r.moments_match;
  j["consistent"] = r.consistent;
  j["m4_identity_deviation"] = r.m4_identity_deviation;
  j["cs_gap"] = r.cs_gap;
  return j;
}

inline json to_json(const RowIntegralReport& r) {
  json j;
  j["constant"] = r.constant;
  j["min_integral"] = r.min_integral;
  j["max_integral"] = r.max_integral;
  j["range"] = r.range;
  j["tolerance"] = r.tolerance;
  j["row_integrals"] = r.row_integrals;
  return j;
}

inline json to_json(const MomentPrediction& p) {
  json j;
  j["moments"] = p.moments;
  j["refinement_delta"] = p.refinement_delta;
  j["resolution_warning"] = p.resolution_warning;
  return j;
}

inline json to_json(const Histogram& h) {
  json j;
  j["edges"] = h.edges;
  j["counts"] = h.counts;
  return j;
}

inline json to_json(const SpectralSample& s, int histogram_bins = 40) {
  json j;
  j["n"] = s.n;
  j["trials"] = s.trials;
  j["moment_mean"] = s.moment_mean;
  j["moment_se"] = s.moment_se;
  j["trace_vs_eigen_gap"] = s.trace_vs_eigen_gap;
  j["histogram"] = to_json(make_histogram(s.pooled(), histogram_bins));
  return j;
}

}  // namespace amalgam::io
