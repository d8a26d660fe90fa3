// Single entry point for the library: every module is reachable as a
// subcommand, input and output travel as JSON, and stochastic commands take
// an explicit seed so runs are reproducible. Exit codes: 0 pass, 1 fail,
// 2 inconclusive or hypothesis violated, 64 bad usage or bad input files,
// 70 numeric failure.

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "amalgam/amalgam.hpp"
#include "amalgam/json_io.hpp"

namespace {

using namespace amalgam;
using io::json;

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInconclusive = 2;
constexpr int kExitUsage = 64;
constexpr int kExitNumeric = 70;

struct GlobalOptions {
  bool no_timestamp = false;
  int threads = 1;
};

std::string utc_now() {
  char buf[32];
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Wraps a payload with the command name (and a timestamp unless disabled),
/// prints it to stdout, and optionally mirrors it to a file.
void emit(const GlobalOptions& g, const std::string& command, const json& payload,
          const std::string& out_path = {}) {
  json root;
  root["command"] = command;
  if (!g.no_timestamp) root["timestamp"] = utc_now();
  for (const auto& [key, value] : payload.items()) root[key] = value;
  std::cout << root.dump(2) << '\n';
  if (!out_path.empty()) io::save_json_file(out_path, root);
}

json partition_to_json(const NonCrossingPartition& p) {
  json blocks = json::array();
  for (const auto& b : p.blocks) blocks.push_back(b);
  return blocks;
}

int run_nc(const GlobalOptions& g, bool list, int n, bool pairs, const std::string& format) {
  if (list) {
    const auto parts = pairs ? enumerate_nc2(n) : enumerate_nc(n);
    if (format == "json") {
      json payload;
      payload["n"] = n;
      payload["pairs"] = pairs;
      payload["count"] = parts.size();
      json arr = json::array();
      for (const auto& p : parts) arr.push_back(partition_to_json(p));
      payload["partitions"] = std::move(arr);
      emit(g, "nc list", payload);
    } else {
      for (const auto& p : parts) std::cout << to_block_notation(p) << '\n';
    }
  } else {
    const long long c = pairs ? count_nc2(n) : count_nc(n);
    if (format == "json") {
      json payload;
      payload["n"] = n;
      payload["pairs"] = pairs;
      payload["count"] = c;
      emit(g, "nc count", payload);
    } else {
      std::cout << c << '\n';
    }
  }
  return kExitPass;
}

int run_algebra_check(const GlobalOptions& g, const std::string& context_path) {
  const AlgebraContext ctx = io::build_context(
      io::context_spec_from_json(io::load_json_file(context_path)));
  const ContextReport report = check_context(ctx);
  emit(g, "algebra check", io::to_json(report));
  return report.ok() ? kExitPass : kExitFail;
}

int run_transform(const GlobalOptions& g, bool to_cumulants, const std::string& series_path,
                  const std::string& out_path) {
  const io::SeriesFile f = io::series_from_json(io::load_json_file(series_path));
  const std::string want = to_cumulants ? "moments" : "cumulants";
  if (f.role != want)
    throw ConfigError("transform: input series role must be '" + want + "'");
  const OperatorSeries result = to_cumulants
                                    ? cumulants_from_moments(*f.series, g.threads)
                                    : moments_from_cumulants(*f.series, g.threads);
  const std::string role = to_cumulants ? "cumulants" : "moments";
  emit(g, std::string("transform ") + (to_cumulants ? "moments-to-cumulants" : "cumulants-to-moments"),
       io::series_to_json(result, f.spec, role, f.algebra), out_path);
  return kExitPass;
}

int run_canonical_moments(const GlobalOptions& g, const std::string& cumulants_path, int order,
                          const std::string& out_path) {
  const io::SeriesFile f = io::series_from_json(io::load_json_file(cumulants_path));
  if (f.role != "cumulants")
    throw ConfigError("canonical moments: input series role must be 'cumulants'");
  if (order > f.series->order_cap())
    throw ConfigError(
        "canonical moments: order beyond the stored cumulants; the truncated model is only "
        "exact up to the series cap");
  const PrescribedCumulants pc(*f.series);
  const MomentSeries moments = canonical_moment_series(pc, order);
  emit(g, "canonical moments", io::series_to_json(moments, f.spec, "moments", f.algebra),
       out_path);
  return kExitPass;
}

int run_freeness_factorization(const GlobalOptions& g, const std::string& series_path,
                               const std::string& context_path, int order) {
  const io::SeriesFile f = io::series_from_json(io::load_json_file(series_path));
  if (f.algebra != "B")
    throw ConfigError("freeness factorization: series must live over the coefficient algebra");
  const AlgebraContext ctx = io::build_context(
      io::context_spec_from_json(io::load_json_file(context_path)));
  if (ctx.B.dim() != f.series->algebra().dim())
    throw ConfigError("freeness factorization: context does not match the series algebra");
  if (order <= 0) order = f.series->order_cap();
  const FactorizationReport report = check_factorization(*f.series, ctx.F, order);
  emit(g, "freeness factorization", io::to_json(report));
  return report.pass ? kExitPass : kExitFail;
}

int run_freeness_oracle(const GlobalOptions& g, const std::string& series_path,
                        const std::string& context_path, int order, std::uint64_t seed,
                        int samples) {
  io::SeriesFile f = io::series_from_json(io::load_json_file(series_path));
  if (f.algebra != "B")
    throw ConfigError("freeness oracle: series must live over the coefficient algebra");
  const AlgebraContext ctx = io::build_context(
      io::context_spec_from_json(io::load_json_file(context_path)));
  if (ctx.B.dim() != f.series->algebra().dim())
    throw ConfigError("freeness oracle: context does not match the series algebra");
  // cumulant input is accepted for convenience and converted up front
  const MomentSeries moments = f.role == "cumulants"
                                   ? moments_from_cumulants(*f.series, g.threads)
                                   : *f.series;
  if (order <= 0) order = std::min(moments.order_cap(), 6);
  const FreenessReport report = freeness_oracle(moments, ctx, order, seed, samples);
  emit(g, "freeness oracle", io::to_json(report));
  switch (report.verdict) {
    case Verdict::kPass:
      return kExitPass;
    case Verdict::kFail:
      return kExitFail;
    case Verdict::kInconclusive:
      return kExitInconclusive;
  }
  return kExitNumeric;
}

int run_freeness_semicircular(const GlobalOptions& g, const std::string& eta_path,
                              const std::string& context_path, int order) {
  const Matrix eta = io::eta_from_json(io::load_json_file(eta_path));
  const AlgebraContext ctx = io::build_context(
      io::context_spec_from_json(io::load_json_file(context_path)));
  const SemicircularReport report = check_semicircular_characterization(eta, ctx, order);
  emit(g, "freeness semicircular", io::to_json(report));
  return report.consistent ? kExitPass : kExitFail;
}

void write_histogram_csv(const std::string& path, const Histogram& h) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i] << '\n';
}

int run_band_run(const GlobalOptions& g, const std::string& profile_spec, int resolution, int n,
                 int trials, std::uint64_t seed, int orders, int bins, const std::string& out_path,
                 const std::string& csv_path) {
  const VarianceProfile profile = io::profile_from_spec(profile_spec, resolution);
  const SpectralSample sample = empirical_spectrum(n, profile, trials, seed, orders);
  const MomentPrediction prediction = predict_moments(profile, orders);
  const RowIntegralReport criterion = corollary_criterion(profile);
  const Histogram hist = make_histogram(sample.pooled(), bins);

  json payload;
  payload["profile"] = profile_spec;
  payload["n"] = sample.n;
  payload["trials"] = sample.trials;
  payload["seed"] = seed;
  payload["moment_mean"] = sample.moment_mean;
  payload["moment_se"] = sample.moment_se;
  payload["trace_vs_eigen_gap"] = sample.trace_vs_eigen_gap;
  payload["prediction"] = io::to_json(prediction);
  // KS distance against the semicircle whose variance is the predicted
  // second moment; only a limit statement when the row criterion holds
  payload["variance"] = prediction.moments.size() > 1 ? prediction.moments[1] : 0.0;
  payload["ks_to_semicircle"] = semicircle_distance(sample, payload["variance"].get<double>());
  payload["criterion_constant"] = criterion.constant;
  payload["histogram"] = io::to_json(hist);
  emit(g, "bandmatrix run", payload, out_path);
  if (!csv_path.empty()) write_histogram_csv(csv_path, hist);
  return kExitPass;
}

int run_band_predict(const GlobalOptions& g, const std::string& profile_spec, int resolution,
                     int orders, const std::string& out_path) {
  const VarianceProfile profile = io::profile_from_spec(profile_spec, resolution);
  const MomentPrediction prediction = predict_moments(profile, orders);
  json payload;
  payload["profile"] = profile_spec;
  payload.update(io::to_json(prediction));
  emit(g, "bandmatrix predict", payload, out_path);
  return kExitPass;
}

int run_band_criterion(const GlobalOptions& g, const std::string& profile_spec, int resolution,
                       double tol) {
  const VarianceProfile profile = io::profile_from_spec(profile_spec, resolution);
  const RowIntegralReport report = corollary_criterion(profile, tol);
  json payload;
  payload["profile"] = profile_spec;
  payload.update(io::to_json(report));
  emit(g, "bandmatrix criterion", payload);
  return report.constant ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  GlobalOptions g;
  if (const char* env = std::getenv("AMALGAM_THREADS")) g.threads = std::atoi(env);
  if (g.threads < 1) g.threads = 1;

  CLI::App app{"coefficient-valued cumulant toolkit: partitions, transforms, the canonical "
               "variable model, freeness checks, and Gaussian band matrices"};
  app.require_subcommand(1);
  app.add_flag("--no-timestamp", g.no_timestamp,
               "omit the timestamp field so equal runs emit equal bytes");
  app.add_option("--threads", g.threads, "worker threads for the transform kernels")
      ->check(CLI::PositiveNumber);

  int exit_code = kExitPass;

  // nc ---------------------------------------------------------------------
  auto* nc = app.add_subcommand("nc", "non-crossing partition enumeration");
  nc->require_subcommand(1);
  struct {
    int n = 0;
    bool pairs = false;
    std::string format = "text";
  } nc_opts;
  for (const char* name : {"count", "list"}) {
    auto* sub = nc->add_subcommand(name, name == std::string("count")
                                             ? "print how many partitions there are"
                                             : "print every partition");
    sub->add_option("n", nc_opts.n, "number of points")->required()->check(CLI::NonNegativeNumber);
    sub->add_flag("--pairs", nc_opts.pairs, "restrict to pair partitions");
    sub->add_option("--format", nc_opts.format, "text or json")
        ->check(CLI::IsMember({"text", "json"}));
    const bool list = name == std::string("list");
    sub->callback([&, list] { exit_code = run_nc(g, list, nc_opts.n, nc_opts.pairs, nc_opts.format); });
  }

  // algebra ----------------------------------------------------------------
  auto* algebra = app.add_subcommand("algebra", "matrix algebra and expectation checks");
  algebra->require_subcommand(1);
  std::string algebra_ctx_path;
  auto* algebra_check = algebra->add_subcommand("check", "validate a context description file");
  algebra_check->add_option("context", algebra_ctx_path, "context JSON file")->required();
  algebra_check->callback([&] { exit_code = run_algebra_check(g, algebra_ctx_path); });

  // transform --------------------------------------------------------------
  auto* transform = app.add_subcommand("transform", "moment/cumulant transforms");
  transform->require_subcommand(1);
  struct {
    std::string series;
    std::string out;
  } tf_opts;
  for (const char* name : {"moments-to-cumulants", "cumulants-to-moments"}) {
    auto* sub = transform->add_subcommand(name, "run the transform on a series file");
    sub->add_option("series", tf_opts.series, "series JSON file")->required();
    sub->add_option("--out", tf_opts.out, "also write the result to this file");
    const bool to_cumulants = name == std::string("moments-to-cumulants");
    sub->callback(
        [&, to_cumulants] { exit_code = run_transform(g, to_cumulants, tf_opts.series, tf_opts.out); });
  }

  // canonical --------------------------------------------------------------
  auto* canonical = app.add_subcommand("canonical", "the canonical variable model");
  canonical->require_subcommand(1);
  struct {
    std::string cumulants;
    int order = 0;
    std::string out;
  } canon_opts;
  auto* canon_moments =
      canonical->add_subcommand("moments", "moments of variables with prescribed cumulants");
  canon_moments->add_option("--cumulants", canon_opts.cumulants, "cumulant series JSON file")
      ->required();
  canon_moments->add_option("--order", canon_opts.order, "highest moment order")
      ->required()
      ->check(CLI::PositiveNumber);
  canon_moments->add_option("--out", canon_opts.out, "also write the result to this file");
  canon_moments->callback(
      [&] { exit_code = run_canonical_moments(g, canon_opts.cumulants, canon_opts.order, canon_opts.out); });

  // freeness ---------------------------------------------------------------
  auto* freeness = app.add_subcommand("freeness", "factorization and freeness checks");
  freeness->require_subcommand(1);

  // each leaf keeps its own option state; defaults must not leak across
  struct {
    std::string series;
    std::string context;
    int order = 0;
  } fact_opts;
  auto* fr_fact = freeness->add_subcommand(
      "factorization", "does conjugating the cumulants by the expectation change them?");
  fr_fact->add_option("series", fact_opts.series, "cumulant series JSON file")->required();
  fr_fact->add_option("context", fact_opts.context, "context JSON file")->required();
  fr_fact->add_option("--order", fact_opts.order, "highest order to check (default: series cap)");
  fr_fact->callback([&] {
    exit_code = run_freeness_factorization(g, fact_opts.series, fact_opts.context, fact_opts.order);
  });

  struct {
    std::string series;
    std::string context;
    int order = 0;
    std::uint64_t seed = 0;
    int samples = 200;
  } oracle_opts;
  auto* fr_oracle = freeness->add_subcommand(
      "oracle", "definition-level freeness check on alternating centered words");
  fr_oracle->add_option("series", oracle_opts.series, "moment (or cumulant) series JSON file")
      ->required();
  fr_oracle->add_option("context", oracle_opts.context, "context JSON file")->required();
  fr_oracle->add_option("--order", oracle_opts.order, "highest word order, at most 6");
  fr_oracle->add_option("--seed", oracle_opts.seed, "seed for the randomized word layer")
      ->required();
  fr_oracle
      ->add_option("--samples", oracle_opts.samples, "extra random words beyond the exhaustive layer")
      ->check(CLI::NonNegativeNumber);
  fr_oracle->callback([&] {
    exit_code = run_freeness_oracle(g, oracle_opts.series, oracle_opts.context, oracle_opts.order,
                                    oracle_opts.seed, oracle_opts.samples);
  });

  struct {
    std::string eta;
    std::string context;
    int order = 8;
  } semi_opts;
  auto* fr_semi = freeness->add_subcommand(
      "semicircular", "covariance-map characterization of scalar semicircle moments");
  fr_semi->add_option("eta", semi_opts.eta, "covariance map JSON file (matrix on the algebra)")
      ->required();
  fr_semi->add_option("context", semi_opts.context, "context JSON file")->required();
  fr_semi->add_option("--order", semi_opts.order, "highest even moment order");
  fr_semi->callback(
      [&] { exit_code = run_freeness_semicircular(g, semi_opts.eta, semi_opts.context, semi_opts.order); });

  // bandmatrix -------------------------------------------------------------
  auto* band = app.add_subcommand("bandmatrix", "Gaussian band matrix experiments");
  band->require_subcommand(1);
  struct {
    std::string profile;
    int resolution = 64;
    int n = 512;
    int trials = 20;
    std::uint64_t seed = 0;
    int orders = 8;
    int bins = 40;
    double tol = kStructuralTol;
    std::string out;
    std::string csv;
  } bm_opts;

  auto* bm_run = band->add_subcommand("run", "sample spectra and compare with the prediction");
  bm_run->add_option("--profile", bm_opts.profile, "builtin:<name> or a profile JSON file")
      ->required();
  bm_run->add_option("--resolution", bm_opts.resolution, "grid resolution for builtin profiles")
      ->check(CLI::PositiveNumber);
  bm_run->add_option("--n", bm_opts.n, "matrix size")->check(CLI::PositiveNumber);
  bm_run->add_option("--trials", bm_opts.trials, "independent matrices")->check(CLI::PositiveNumber);
  bm_run->add_option("--seed", bm_opts.seed, "base seed; trial t uses an independent substream")
      ->required();
  bm_run->add_option("--orders", bm_opts.orders, "trace moments up to this order (at most 8)");
  bm_run->add_option("--bins", bm_opts.bins, "histogram bins")->check(CLI::PositiveNumber);
  bm_run->add_option("--out", bm_opts.out, "also write the result to this file");
  bm_run->add_option("--csv", bm_opts.csv, "write the histogram as CSV to this file");
  bm_run->callback([&] {
    exit_code = run_band_run(g, bm_opts.profile, bm_opts.resolution, bm_opts.n, bm_opts.trials,
                             bm_opts.seed, bm_opts.orders, bm_opts.bins, bm_opts.out, bm_opts.csv);
  });

  auto* bm_predict = band->add_subcommand("predict", "combinatorial limit moments of a profile");
  bm_predict->add_option("--profile", bm_opts.profile, "builtin:<name> or a profile JSON file")
      ->required();
  bm_predict->add_option("--resolution", bm_opts.resolution, "grid resolution for builtin profiles")
      ->check(CLI::PositiveNumber);
  bm_predict->add_option("--orders", bm_opts.orders, "moments up to this order (at most 12)");
  bm_predict->add_option("--out", bm_opts.out, "also write the result to this file");
  bm_predict->callback([&] {
    exit_code = run_band_predict(g, bm_opts.profile, bm_opts.resolution, bm_opts.orders, bm_opts.out);
  });

  auto* bm_criterion =
      band->add_subcommand("criterion", "do the row integrals of the profile depend on the row?");
  bm_criterion->add_option("--profile", bm_opts.profile, "builtin:<name> or a profile JSON file")
      ->required();
  bm_criterion->add_option("--resolution", bm_opts.resolution, "grid resolution for builtin profiles")
      ->check(CLI::PositiveNumber);
  bm_criterion->add_option("--tol", bm_opts.tol, "allowed row integral spread");
  bm_criterion->callback(
      [&] { exit_code = run_band_criterion(g, bm_opts.profile, bm_opts.resolution, bm_opts.tol); });

  // let --no-timestamp / --threads appear after the subcommand too
  const std::function<void(CLI::App*)> allow_globals = [&](CLI::App* a) {
    a->fallthrough();
    for (CLI::App* sub : a->get_subcommands([](CLI::App*) { return true; })) allow_globals(sub);
  };
  allow_globals(&app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const SizeLimitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "unexpected failure: " << e.what() << '\n';
    return kExitNumeric;
  }
  return exit_code;
}
